#pragma once

#include <stdexcept>
#include <string>

namespace lpm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor or layer shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf encountered where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated binary input (IDX files, weight files, mask blobs).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Violated precondition on an argument.
class ArgumentError : public Error {
public:
    using Error::Error;
};

}  // namespace lpm
