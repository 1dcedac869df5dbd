#pragma once

#include <stdexcept>
#include <string>

namespace xdtl {

// Bad arguments or mismatched dimensions. CLI exit code 2.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data or protocol violations: malformed manifests, missing mates,
// unreadable images. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mathematically undefined quantities (e.g. log-det of a singular matrix).
// CLI exit code 4.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Numerical breakdown in a solver. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xdtl
