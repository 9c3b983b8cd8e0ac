#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bpre::par {

inline int max_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs body(i) for i in [0, n). workers == 1 takes the plain serial loop
// (the reference path used by the tests); workers == 0 means "all available".
// Bodies must only write to locations owned by their index so that results
// do not depend on the schedule or the worker count.
template <class F>
void parallel_for(std::int64_t n, int workers, F&& body) {
#ifdef _OPENMP
  if (workers != 1) {
    const int nt = workers > 0 ? workers : max_workers();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace bpre::par
