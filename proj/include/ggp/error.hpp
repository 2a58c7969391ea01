#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ggp {

/// Malformed or out-of-domain input (bad file line, index out of range,
/// length mismatch). Maps to CLI exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown: Cholesky failure after the full jitter ladder, or a
/// non-finite objective. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::vector<double> jitter_ladder = {})
      : std::runtime_error(what), jitter_ladder_(std::move(jitter_ladder)) {}

  const std::vector<double>& jitter_ladder() const noexcept { return jitter_ladder_; }

 private:
  std::vector<double> jitter_ladder_;
};

/// Operation invoked on an object whose state does not permit it
/// (e.g. selecting from an empty candidate pool).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Operation not defined for the given configuration
/// (e.g. an explicit feature map for a polynomial kernel).
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ggp
