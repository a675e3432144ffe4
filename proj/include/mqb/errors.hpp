#pragma once

#include <stdexcept>
#include <string>

namespace mqb {

/// Base for every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An eigen-solver or factorization failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be positive definite could not be factorized.
class SingularMatrixError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Gram matrix of the exploration steps is singular; the caller must extend exploration.
class SingularGramError : public SingularMatrixError {
public:
    using SingularMatrixError::SingularMatrixError;
};

/// Argument violates an operation's precondition (empty set, bad shape, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Estimator queried before it has seen enough instances.
class InsufficientData : public Error {
public:
    using Error::Error;
};

/// Configuration value missing, malformed or unknown. The message carries the key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mqb
