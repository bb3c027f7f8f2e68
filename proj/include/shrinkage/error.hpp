#pragma once

#include <stdexcept>
#include <string>

namespace shrinkage {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operand shape mismatch; message names the operation and both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Parameter outside its domain (negative scale, keep-probability outside [0,1], ...).
struct DomainError : Error {
    using Error::Error;
};

// Malformed or inconsistent configuration (file keys, CLI overrides, network specs).
struct ConfigError : Error {
    using Error::Error;
};

// NaN/Inf surfaced where a finite value is required; message names the producer.
struct NumericError : Error {
    using Error::Error;
};

// A requested moment does not exist for the chosen noise family.
struct DivergentExpectation : Error {
    using Error::Error;
};

// Adaptive quadrature could not reach the requested tolerance.
struct QuadratureError : Error {
    using Error::Error;
};

// File/stream problems (datasets, state files, reports).
struct IoError : Error {
    using Error::Error;
};

}  // namespace shrinkage
