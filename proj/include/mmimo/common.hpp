#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmimo {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

using Bits = std::vector<std::uint8_t>;
using Permutation = std::vector<std::size_t>;

// Error hierarchy. Each subclass names the error domain used throughout the
// library; callers that only care about failure catch mmimo::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A scalar or configuration value outside its admissible domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Dimension or length mismatch between collaborating objects.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Matrix that has to be inverted is (numerically) singular.
class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Too few linearly independent observations to solve a least-squares problem.
class RankError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Exhaustive search requested beyond the desk-scale guard.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + key + ": " + what
                   : key + ": " + what),
        key_(key),
        line_(line) {}

  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline bool is_permutation_of(const Permutation& perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

}  // namespace mmimo
