#pragma once

#include <stdexcept>
#include <string>

namespace dtcbc {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Constraint system has no feasible point (LP/QP/filter).
struct InfeasibleError : Error {
  explicit InfeasibleError(const std::string& what) : Error(what) {}
};

/// Objective unbounded over the feasible set.
struct UnboundedError : Error {
  explicit UnboundedError(const std::string& what) : Error(what) {}
};

/// Polytope unbounded where a bounded one is required.
struct UnboundedPolytopeError : UnboundedError {
  explicit UnboundedPolytopeError(const std::string& what) : UnboundedError(what) {}
};

/// Operand dimensions do not match.
struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Dimension exceeds what an exact small-scale method supports.
struct DimensionTooLargeError : Error {
  explicit DimensionTooLargeError(const std::string& what) : Error(what) {}
};

/// Operation on an empty set.
struct EmptySetError : Error {
  explicit EmptySetError(const std::string& what) : Error(what) {}
};

/// Observed data is inconsistent with the assumed parameter set and
/// disturbance bound; the standing model assumptions are falsified.
struct ModelFalsifiedError : Error {
  explicit ModelFalsifiedError(const std::string& what) : Error(what) {}
};

/// A quantity requiring ground-truth parameters was requested without them.
struct OracleUnavailableError : Error {
  explicit OracleUnavailableError(const std::string& what) : Error(what) {}
};

/// Affine barrier description required but not available.
struct NonAffineBarrierError : Error {
  explicit NonAffineBarrierError(const std::string& what) : Error(what) {}
};

/// Parameter set fails validation.
struct InvalidParamsError : Error {
  explicit InvalidParamsError(const std::string& what) : Error(what) {}
};

/// Rate gain outside the admissible open interval.
struct InvalidRateError : Error {
  explicit InvalidRateError(const std::string& what) : Error(what) {}
};

/// RLS learning rate outside (0, 1/|phi|^2).
struct LearningRateError : Error {
  explicit LearningRateError(const std::string& what) : Error(what) {}
};

/// Requested mode not supported for the given set shape or configuration.
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& what) : Error(what) {}
};

/// Filesystem failure during export.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace dtcbc
