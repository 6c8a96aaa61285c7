#pragma once

#include <cstddef>
#include <functional>

namespace metassm {

// Global worker cap, set from the CLI --jobs flag. 1 selects the serial
// reference path everywhere; tests compare it against the OpenMP path
// bit for bit.
int max_jobs();
void set_max_jobs(int jobs);
bool openmp_enabled();

// Runs body(i) for i in [0, n). jobs <= 1 is a plain serial loop (the
// reference implementation); jobs > 1 uses OpenMP with a static schedule.
// Bodies must write only to per-index slots so both paths produce identical
// results; reductions over the slots are then done in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  int jobs = 0 /* 0 = max_jobs() */);

}  // namespace metassm
