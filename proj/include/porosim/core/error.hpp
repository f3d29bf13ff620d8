#pragma once

#include <stdexcept>
#include <string>

namespace porosim {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tetrahedra with non-positive signed volume where a consistent orientation is required.
class OrientationError : public Error {
 public:
  using Error::Error;
};

class DegenerateElementError : public Error {
 public:
  using Error::Error;
};

/// A dense solve hit a (numerically) singular factor. `factor()` names it.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(std::string factor, double condition)
      : Error("singular matrix in factor '" + factor + "' (condition estimate " +
              std::to_string(condition) + ")"),
        factor_(std::move(factor)),
        condition_(condition) {}

  const std::string& factor() const noexcept { return factor_; }
  double condition() const noexcept { return condition_; }

 private:
  std::string factor_;
  double condition_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Linear solver failed to reach tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : Error(what + " (relative residual " + std::to_string(residual) + " after " +
              std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Scene or input validation failure; `field()` is the offending JSON path
/// (e.g. "wetting.porosity") or a file path.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace porosim
