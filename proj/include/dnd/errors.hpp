#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dnd {

// Base of every error raised by the library. kind() is a stable, machine-readable tag
// used by the command-line tool when it reports failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// A precondition on shapes, ranges or configuration was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract_violation"; }
};

// Input data is unusable (non-finite entries and the like).
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data_error"; }
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time)
      : Error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}
  const char* kind() const noexcept override { return "integration_error"; }
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t batch_index)
      : Error(what + " (batch " + std::to_string(batch_index) + ")"), batch_index_(batch_index) {}
  const char* kind() const noexcept override { return "training_error"; }
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

// File could not be read, is malformed, or carries an unsupported format version.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format_error"; }
};

// The weight perturbation ended without certified weights.
class SolverFailure : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "solver_failure"; }
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ContractViolation(message);
}

}  // namespace detail

}  // namespace dnd
