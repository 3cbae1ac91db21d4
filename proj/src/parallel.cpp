#include "enkf/parallel.hpp"

#include <omp.h>

#include "enkf/errors.hpp"

namespace enkf {

int num_threads() { return omp_get_max_threads(); }

void set_num_threads(int threads) {
  if (threads < 1) throw InvalidArgument("thread count must be positive");
  omp_set_num_threads(threads);
}

}  // namespace enkf
