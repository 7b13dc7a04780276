#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hamlearn {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/vector dimensions disagree.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& what, std::ptrdiff_t expected, std::ptrdiff_t actual)
      : Error(what + ": expected dimension " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::ptrdiff_t expected() const { return expected_; }
  std::ptrdiff_t actual() const { return actual_; }

 private:
  std::ptrdiff_t expected_;
  std::ptrdiff_t actual_;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (bad ratios, unknown keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Integration produced a non-finite coordinate.
class BlowupError : public Error {
 public:
  explicit BlowupError(std::size_t step)
      : Error("integration blew up (non-finite state) at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Rejection sampler could not find admissible states.
class SamplingError : public Error {
 public:
  using Error::Error;
};

// Data without usable signal (e.g. zero variance).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hamlearn
