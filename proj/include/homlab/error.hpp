#pragma once

#include <stdexcept>
#include <string>

namespace homlab {

/// Raised for inputs that violate a documented precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative solve fails and the caller asked for a hard failure.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a Gram matrix of corrector gradients is numerically singular.
class DegenerateCorrector : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unknown configuration keys.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidArgument(message);
    }
}

}  // namespace homlab
