#pragma once

#include <stdexcept>
#include <string>

namespace cet {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape incompatibility (names both shapes in the message).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Missing or misnamed column in an input file.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

// Unparseable cell content (carries row/column in the message).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Structurally valid input with illegal values (e.g. treatment not in {0,1}).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Requested split/batch sizes cannot be met by the data at hand.
class SizingError : public Error {
public:
    explicit SizingError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values or combinations.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or other numeric failures at runtime.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// An operation that needs both treatment arms got an empty one.
class GroupError : public Error {
public:
    explicit GroupError(const std::string& msg) : Error(msg) {}
};

// File system / IO failures.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace cet
