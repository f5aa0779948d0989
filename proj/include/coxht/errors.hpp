#pragma once

#include <stdexcept>
#include <string>

namespace coxht {

/// A numerical routine produced a non-finite value or could not proceed.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Root search interval whose endpoint values share a sign.
class BracketError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Observed information is singular (e.g. a constant or duplicated column).
class SingularInformationError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// The simplex solver exceeded its pivot budget or lost feasibility.
class LpError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace coxht
