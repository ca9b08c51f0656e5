#pragma once

#include <stdexcept>
#include <string>

namespace wdro {

/// Bad argument to a library call (dimension mismatch, out-of-range value).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid run configuration; maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable or unusable input data; maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what, long line = -1)
        : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}

    long line() const noexcept { return line_; }

private:
    long line_;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

/// Numerical failure: degenerate multipliers, non-PSD covariance,
/// solver breakdown, or a report in the wrong state. Exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CovarianceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InvalidStateError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace wdro
