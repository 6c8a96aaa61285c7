#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metassm/common.hpp"

namespace metassm {

// Time-indexed (x, u, y) records with sampling period and provenance.
// Row-major storage; x may be empty for input-output-only data.
struct Trajectory {
  double dt = 0.0;
  std::size_t len = 0;
  int nx = 0, nu = 0, ny = 0;
  std::vector<double> x, u, y;
  std::string params_json = "{}";  // generating parameters, seeds, schema notes
  uint64_t seed = 0;

  double xv(std::size_t t, int c) const { return x[t * static_cast<std::size_t>(nx) + c]; }
  double uv(std::size_t t, int c) const { return u[t * static_cast<std::size_t>(nu) + c]; }
  double yv(std::size_t t, int c) const { return y[t * static_cast<std::size_t>(ny) + c]; }
  double& xv(std::size_t t, int c) { return x[t * static_cast<std::size_t>(nx) + c]; }
  double& uv(std::size_t t, int c) { return u[t * static_cast<std::size_t>(nu) + c]; }
  double& yv(std::size_t t, int c) { return y[t * static_cast<std::size_t>(ny) + c]; }

  void validate() const;
};

// stem.csv (t, x*, u*, y* columns) plus stem.json manifest.
void save_trajectory(const Trajectory& tr, const std::string& stem);
Trajectory load_trajectory(const std::string& stem);

}  // namespace metassm
