#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rftrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Out-of-range or malformed input value (e.g. latitude outside [-90, 90]).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Violated precondition on shapes or dimensions.
class ContractError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

/// Innovation covariance or normal matrix could not be inverted.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

/// A segment with too few epochs to filter. Not fatal for a full run.
class SegmentSkipped : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Collects non-fatal warnings raised while processing.
struct Diagnostics {
    std::vector<std::string> warnings;

    void warn(std::string message) { warnings.push_back(std::move(message)); }
    std::size_t count() const noexcept { return warnings.size(); }
};

}  // namespace rftrack
