#pragma once

#include <stdexcept>
#include <string>

namespace stefan {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Mismatched array sizes or grid shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// Invalid configuration file, unknown key, or bad value.
struct ConfigError : Error {
  using Error::Error;
};

/// Control region or weight-plateau geometry violates the required nesting.
struct GeometryError : Error {
  using Error::Error;
};

/// Carleman parameters below their admissible thresholds.
struct ParameterError : Error {
  using Error::Error;
};

/// A linear solve hit a vanishing pivot or denominator.
struct SingularSolveError : Error {
  using Error::Error;
};

/// The free boundary left its admissible range (front collapse or blow-up).
struct AdmissibilityError : Error {
  using Error::Error;
};

/// A fixed-point iteration failed to converge within its budget.
struct PicardError : Error {
  using Error::Error;
};

/// Adjoint terminal data violate the nonlocal compatibility condition.
struct CompatibilityError : Error {
  using Error::Error;
};

/// An iterative linear solver stagnated and no fallback applies.
struct ConditioningError : Error {
  using Error::Error;
};

/// Source data fall outside the weighted space required by the synthesis.
struct SupportError : Error {
  using Error::Error;
};

}  // namespace stefan
