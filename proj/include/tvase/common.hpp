#pragma once

#include <stdexcept>
#include <string>

namespace tvase {

// Base class for everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches; message names the offending axis.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad argument values (ranges, missing components, unusable configs).
class ValueError : public Error {
public:
    using Error::Error;
};

// File and serialization problems (bad magic, truncation, unreadable WAV).
class IoError : public Error {
public:
    using Error::Error;
};

// Stream driven after a failure, or otherwise unusable object state.
class StateError : public Error {
public:
    using Error::Error;
};

} // namespace tvase
