#pragma once

#include <stdexcept>
#include <string>

namespace metassm {

// Project-wide error type. Numerical failures (non-finite states, singular
// solves) derive from this so the CLI can map them to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : Error {
  using Error::Error;
};

}  // namespace metassm
