#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace specdyn {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct NonFinite : Error {
  using Error::Error;
};

struct NonFiniteGradient : Error {
  using Error::Error;
};

struct AllZeroMatrix : Error {
  using Error::Error;
};

struct NotSymmetric : Error {
  using Error::Error;
};

struct MissingDecomposition : Error {
  using Error::Error;
};

struct RegularizedProblem : Error {
  using Error::Error;
};

struct UnregularizedProblem : Error {
  using Error::Error;
};

struct NonPositiveSeries : Error {
  using Error::Error;
};

struct WindowTooShort : Error {
  using Error::Error;
};

struct SubcriticalExponents : Error {
  using Error::Error;
};

struct InstanceTooSmall : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Raised by the update loop when an iterate norm crosses the divergence
// threshold; carries the offending step index and an optional context label
// (method name, sweep cell) attached by harnesses.
struct Diverged : Error {
  std::size_t step;
  explicit Diverged(std::size_t at_step, const std::string& context = "")
      : Error((context.empty() ? std::string() : context + ": ") +
              "iterate diverged at step " + std::to_string(at_step)),
        step(at_step) {}
};

}  // namespace specdyn
