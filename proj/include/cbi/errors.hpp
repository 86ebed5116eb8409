#pragma once

#include <stdexcept>
#include <string>

namespace cbi {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model file could not be read.
class IoError : public Error {
public:
    using Error::Error;
};

/// Model file is not valid JSON.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Model file is valid JSON but does not follow the model schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the domain of the function (negative Laplace
/// argument, non-finite matrix entry, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A hypothesis required by an operation does not hold (reducible mean
/// matrix, subcritical model, eigenvalue outside the admissible band, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed (defective spectrum, flow leaving the cone,
/// blow-up, step-halving self-check).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A simulated path produced a non-finite state.
class SimulationError : public Error {
public:
    SimulationError(const std::string& what, long long step, long long path = -1)
        : Error(what), step_(step), path_(path) {}

    long long step() const noexcept { return step_; }
    long long path() const noexcept { return path_; }

private:
    long long step_;
    long long path_;
};

}  // namespace cbi
