#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "metassm/rng.hpp"

namespace testutil {

// central finite difference of a scalar function, one input component at a time
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double got, double want, double floor = 1e-12) {
  return std::fabs(got - want) / (std::fabs(want) + floor);
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline double swish(double z) { return z * sigmoid(z); }
inline double swish_d1(double z) {
  const double s = sigmoid(z);
  return s + z * s * (1.0 - s);
}
inline double swish_d2(double z) {
  const double s = sigmoid(z);
  const double s1 = s * (1.0 - s);
  return 2.0 * s1 + z * s1 * (1.0 - 2.0 * s);
}

}  // namespace testutil
