#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evroute {

// Base for every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class UnknownVehicleError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class LengthError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Sequence longer than a model's positional table.
class ContextError : public LengthError {
public:
    using LengthError::LengthError;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class SchemaMismatchError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class DegenerateFitError : public Error {
public:
    using Error::Error;
};

class EmptyEvaluationError : public Error {
public:
    using Error::Error;
};

class ReferenceMissingError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

} // namespace evroute
