#pragma once

#include <stdexcept>
#include <string>

namespace ek {

/// Failure categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
  Validation,  ///< bad input or configuration (exit 2)
  Domain,      ///< argument outside a closure's admissible interval (exit 2)
  Numerical,   ///< solver breakdown, no solution, resolution too low (exit 3)
  Dependency,  ///< a required upstream artifact is missing (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what) : Error(ErrorKind::Dependency, what) {}
};

int exit_code(ErrorKind kind) noexcept;

}  // namespace ek
