#pragma once

#include <stdexcept>
#include <string>

namespace klmdp {

/// Invalid argument: out-of-range index, shape mismatch, malformed pmf.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A policy puts mass where the nominal rule has none.
class AbsoluteContinuityError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// The chain is not unichain, not aperiodic, or the basepoint is transient.
class ChainStructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative method did not reach its tolerance, or a post-hoc residual
/// check failed.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace klmdp
