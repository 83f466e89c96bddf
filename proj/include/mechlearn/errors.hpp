#pragma once

#include <stdexcept>
#include <string>

namespace mechlearn {

/// Base of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller misuse: bad arguments, dimension mismatches, unmet preconditions.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A real value outside the declared value range.
class DomainError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// Invalid configuration (unknown family, schema violation).
class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// Malformed input file.
class ParseError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// A problem too large for the enumeration or solver budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A declared invariant failed at runtime (solver fault, audit failure).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mechlearn
