#pragma once

#include <stdexcept>
#include <string>

namespace erank {

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { usage = 1, data = 2, contract = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

/// Bad parameters or configuration (window < 2, lambdas not summing to 1, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

/// Malformed or missing input files.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Unknown entity / relation / query id.
class LookupError : public Error {
public:
    explicit LookupError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

/// A value is mathematically undefined for the given inputs (empty query, zero base, ...).
class UndefinedError : public Error {
public:
    explicit UndefinedError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

} // namespace erank
