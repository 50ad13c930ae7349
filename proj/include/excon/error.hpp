#pragma once

#include <stdexcept>
#include <string>

namespace excon {

// Every failure raised by the library derives from Error so callers (and the
// CLI) can map it to an exit code without caring about the concrete kind.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input outside an operation's domain (dimension mismatch, zero vector, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Operation not defined for the requested variant.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

// Malformed text input. line() is 1-based; 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Well-formed text whose shape disagrees with the expected schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Subset-sum family does not have the structure recovery requires.
class StructureError : public Error {
public:
    using Error::Error;
};

// Gradient samples do not cover every activation region.
class CoverageError : public Error {
public:
    using Error::Error;
};

// Gradient samples disagree with any single sign assignment.
class InconsistencyError : public Error {
public:
    using Error::Error;
};

}  // namespace excon
