#pragma once

#include <stdexcept>
#include <string>

namespace dd {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed, unknown, or unsatisfiable configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Missing, unreadable, or corrupt files.
struct IoError : Error {
    using Error::Error;
};

// Artifact was produced by a different teacher than the one supplied.
struct FingerprintError : Error {
    using Error::Error;
};

// Argument outside the documented domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

// Numerical failure: divergence, non-finite state.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace dd
