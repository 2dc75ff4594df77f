#pragma once

#include <stdexcept>
#include <string>

namespace volenc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input does not match an expected file or message layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Input is well-formed but violates a domain invariant or precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace volenc
