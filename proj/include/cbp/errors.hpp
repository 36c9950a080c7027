#pragma once

#include <stdexcept>
#include <string>

namespace cbp {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map categories to exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "runtime"; }
};

class ConfigError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class DataError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

class ParseError : public DataError {
public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "parse"; }
};

class ValidationError : public DataError {
public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "validation"; }
};

class DomainError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

class LengthMismatch : public DomainError {
public:
  using DomainError::DomainError;
  const char* kind() const noexcept override { return "length_mismatch"; }
};

class NonPositiveEntry : public DomainError {
public:
  using DomainError::DomainError;
  const char* kind() const noexcept override { return "non_positive_entry"; }
};

class DivisionByZero : public DomainError {
public:
  using DomainError::DomainError;
  const char* kind() const noexcept override { return "division_by_zero"; }
};

class BudgetExceeded : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "budget_exceeded"; }
};

class InsufficientParticles : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "insufficient_particles"; }
};

class DegenerateSample : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_sample"; }
};

class ZeroVariance : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "zero_variance"; }
};

} // namespace cbp
