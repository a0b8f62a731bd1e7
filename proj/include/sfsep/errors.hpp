#pragma once

#include <stdexcept>
#include <string>

namespace sfsep {

// Argument outside the domain of a function (Hankel at 0, exterior field at the origin, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// sin(theta) inside the guard band of the theta-derivative formula.
class PoleProximityError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Singular or non-finite linear system; distinct from bad regularization values,
// which are reported as std::invalid_argument.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sfsep
