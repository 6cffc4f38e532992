#pragma once

#include <stdexcept>
#include <string>

namespace orthocal {

/// Base of every exception raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Square root of a negative number, negative discriminant, zero joint value.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A joint value outside [L + rho_min, L + rho_max].
class LimitError : public Error {
public:
    using Error::Error;
};

/// A vanishing denominator in a Jacobian or leg-line parameter.
class SingularError : public Error {
public:
    using Error::Error;
};

/// A design matrix whose numerical rank is below 3.
class RankError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, int iterations)
        : Error(what), iterations_(iterations) {}
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

/// Malformed or incomplete input (files, flags, measurement sets).
class InputError : public Error {
public:
    using Error::Error;
};

}  // namespace orthocal
