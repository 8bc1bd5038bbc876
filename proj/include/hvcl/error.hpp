#pragma once

#include <stdexcept>
#include <string>

namespace hvcl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a non-positive value, std <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed factorizations, diverging losses.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing dataset files.
class DataError : public Error {
public:
    enum class Kind { missing_file, bad_magic, truncated, count_mismatch, invalid_content };

    DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Unreadable, missing or version-incompatible checkpoint.
class CheckpointError : public Error {
public:
    using Error::Error;
};

} // namespace hvcl
