#pragma once

#include <stdexcept>
#include <string>

namespace mvmr {

/// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent user input (files, flags, dimensions).
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical failure: non-PD covariance, rank deficiency, ill-conditioning.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace mvmr
