#include "splatgeo/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace splatgeo {

int worker_threads() {
  static const int threads = [] {
    const char* env = std::getenv("SPLATGEO_THREADS");
    int n = 0;
    if (env != nullptr) {
      try {
        n = std::stoi(env);
      } catch (...) {
        n = 0;
      }
    }
    return n > 0 ? n : omp_get_max_threads();
  }();
  return threads;
}

}  // namespace splatgeo
