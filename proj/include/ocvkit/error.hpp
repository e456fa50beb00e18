#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ocvkit {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, violated preconditions on measured data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known (0 otherwise).
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Caller misuse: invalid arguments, out-of-domain parameters.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Numerical failure such as a rank-deficient design matrix or a singular evaluation point.
class NumericError : public DataError {
public:
    using DataError::DataError;
};

} // namespace ocvkit
