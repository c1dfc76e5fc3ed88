#pragma once

#include <stdexcept>
#include <string>

namespace lmpanel {

// Problems with input data: malformed files, broken invariants, shape
// mismatches between a model and a dataset.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures: singular systems, invalid parameterizations,
// impossible observations under a model.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lmpanel
