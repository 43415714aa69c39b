#pragma once

#include <stdexcept>
#include <string>

namespace aoii {

/// Bad input: parameter ranges, admissibility, malformed penalty functions or configs.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a trustworthy answer.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class RangeError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

/// Transmission does not help: a >= beta.
class AdmissibilityViolation : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class ParamError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

/// The terms f(k) a^k did not decay within the summation budget.
class DivergenceSuspected : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class SearchOverflow : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class NoConvergence : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class InfeasibleTolerance : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

} // namespace aoii
