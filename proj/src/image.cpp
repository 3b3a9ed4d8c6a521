#include "splatgeo/image.hpp"

#include <string>

#include "splatgeo/error.hpp"

namespace splatgeo {

void require_same_shape(const Image& a, const Image& b, const char* context) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(context) + ": " + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                    std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height) + "x" + std::to_string(b.channels));
  }
}

Image constant_image(int width, int height, int channels, double value) {
  return Image(width, height, channels, value);
}

}  // namespace splatgeo
