#pragma once

#include <cstddef>

namespace enkf {

/// Number of worker threads used by tile-parallel loops.
int num_threads();
void set_num_threads(int threads);

}  // namespace enkf
