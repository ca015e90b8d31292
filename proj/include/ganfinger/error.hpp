#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ganfinger {

/// Root of every error thrown by the library. The harness maps subclasses to
/// process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or out-of-range parameter.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Unknown dataset tag, malformed config document, empty pool.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact failed to parse or violates its schema/invariants.
class IntegrityError : public Error {
 public:
  IntegrityError(std::string field, const std::string& what)
      : Error("integrity error in field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A domain object was constructed in a state its invariants forbid.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Not enough records/examples to satisfy a request.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::size_t available, std::size_t required)
      : Error(what + " (have " + std::to_string(available) + ", need " + std::to_string(required) + ")"),
        available_(available),
        required_(required) {}
  std::size_t available() const noexcept { return available_; }
  std::size_t required() const noexcept { return required_; }

 private:
  std::size_t available_;
  std::size_t required_;
};

/// The conferrability filter accepted fewer than K pairs.
class ShortfallError : public CapacityError {
 public:
  ShortfallError(std::size_t accepted, std::size_t requested)
      : CapacityError("conferrable fingerprint shortfall", accepted, requested) {}
  std::size_t accepted() const noexcept { return available(); }
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch, long step = -1)
      : Error(what + " at epoch " + std::to_string(epoch) +
              (step >= 0 ? ", step " + std::to_string(step) : std::string{})),
        epoch_(epoch),
        step_(step) {}
  int epoch() const noexcept { return epoch_; }
  long step() const noexcept { return step_; }

 private:
  int epoch_;
  long step_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A suspect oracle failed before all queries were answered.
class PartialResultError : public Error {
 public:
  PartialResultError(const std::string& what, std::size_t completed)
      : Error(what + " (completed " + std::to_string(completed) + " queries)"), completed_(completed) {}
  std::size_t completed() const noexcept { return completed_; }

 private:
  std::size_t completed_;
};

/// CLI exit code for an error: 2 validation, 3 shortfall/capacity, 4 training failure, 1 otherwise.
int exit_code(const std::exception& e) noexcept;

}  // namespace ganfinger
