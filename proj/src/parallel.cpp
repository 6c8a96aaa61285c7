#include "metassm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace metassm {

namespace {
std::atomic<int> g_jobs{0};  // 0 = hardware default
}

int max_jobs() {
  const int j = g_jobs.load();
  if (j > 0) return j;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_jobs(int jobs) { g_jobs.store(std::max(jobs, 0)); }

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  int jobs) {
  if (jobs <= 0) jobs = max_jobs();
#ifdef _OPENMP
  if (jobs > 1 && n > 1) {
    std::exception_ptr err;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(jobs)
    for (long long i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace metassm
