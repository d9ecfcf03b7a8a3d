#pragma once

#include <stdexcept>
#include <string>

namespace fricid {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidModelError : Error {
  using Error::Error;
};

/// Contact solver failed to converge; carries the last sweep residuals.
struct SolverError : Error {
  SolverError(const std::string& msg, double impulse_change,
              double complementarity, int sweeps)
      : Error(msg),
        impulse_change(impulse_change),
        complementarity(complementarity),
        sweeps(sweeps) {}
  double impulse_change = 0.0;
  double complementarity = 0.0;
  int sweeps = 0;
};

/// Singular stacked system in a gradient solve.
struct GradientError : Error {
  GradientError(const std::string& msg, double condition_number)
      : Error(msg), condition_number(condition_number) {}
  double condition_number = 0.0;
};

struct OracleError : Error {
  using Error::Error;
};

struct BufferError : Error {
  using Error::Error;
};

struct IdentifierError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  ConfigError(const std::string& msg, int line = 0, std::string key = {})
      : Error(msg), line(line), key(std::move(key)) {}
  int line = 0;
  std::string key;
};

}  // namespace fricid
