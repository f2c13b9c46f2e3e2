#ifndef TRUNCLOG_ERRORS_HPP
#define TRUNCLOG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace trunclog {

/// Operands built over different (d, kappa) pairs, or a basis mismatch.
struct ParamsMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input violates a documented precondition (wrong level-0 value, t out of
/// range, steps < 1, point off the manifold, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A computed quantity failed a self-check that can only fail through a bug
/// or a corrupted input (e.g. a logarithm that is not a Lie element).
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed experiment configuration or JSON document.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace trunclog

#endif  // TRUNCLOG_ERRORS_HPP
