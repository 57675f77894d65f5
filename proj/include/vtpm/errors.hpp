#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vtpm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violated a documented precondition (r = 2, eta0 <= eta_inf, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The cell geometry is not admissible (obstacle too large, fluid part does
/// not percolate through the periodic cell).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A query point lies outside the domain it refers to.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed to reach its tolerance.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::vector<double> history = {})
      : Error(what), history_(std::move(history)) {}

  /// Residual history (or last bracket for root finders) at the time of failure.
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// A configuration document is malformed; the message names the field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace vtpm
