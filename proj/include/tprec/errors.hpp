#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace tprec {

/// Base of every error raised by the library. The CLI maps NumericError to
/// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree. `mode()` names the offending tensor mode when one
/// is known.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what, std::optional<std::size_t> mode = std::nullopt)
        : Error(mode ? what + " (mode " + std::to_string(*mode) + ")" : what), mode_(mode) {}

    [[nodiscard]] std::optional<std::size_t> mode() const noexcept { return mode_; }

private:
    std::optional<std::size_t> mode_;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// NaN, infinity or overflow encountered in a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A closed-form expression was evaluated outside its domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A desk-scale guard was exceeded.
class ResourceError : public Error {
public:
    using Error::Error;
};

/// A theorem-style precondition does not hold for the given input.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
          line_(line), column_(column) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

}  // namespace tprec
