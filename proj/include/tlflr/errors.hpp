#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tlflr {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operands live on different grids or have inconsistent sizes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input outside an operation's domain (empty data, m > G, zero price, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Input failed a structural check (non-symmetric kernel, non-finite values).
class ValidationError : public Error {
public:
    using Error::Error;
};

// The requested fit is numerically degenerate, typically m too large.
class IllConditionedError : public Error {
public:
    using Error::Error;
};

// An invariant that should hold by construction did not.
class InvariantViolation : public Error {
public:
    using Error::Error;
};

// Bad user configuration (flags, config file, tuning grids).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Missing or unreadable data file.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t row, std::size_t column)
        : DataError(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
          row_(row),
          column_(column)
    {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

} // namespace tlflr
