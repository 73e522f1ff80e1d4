#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nlhom {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid lattice, model, or time-stepping parameters.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Caller violated a documented precondition on the data (e.g. nonzero displacement on a fixed particle).
class ContractViolation : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ModelError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ProbeError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Iterative solver failed to reach its tolerance; carries the residual history.
class SolverError : public Error {
public:
    SolverError(const std::string& what, std::vector<double> history)
        : Error(what), residual_history(std::move(history)) {}

    std::vector<double> residual_history;
};

} // namespace nlhom
