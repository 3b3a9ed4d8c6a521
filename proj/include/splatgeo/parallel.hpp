#pragma once

namespace splatgeo {

// Thread count for data-parallel loops. Reads SPLATGEO_THREADS (0 or unset
// means the OpenMP default).
int worker_threads();

}  // namespace splatgeo
