#pragma once

#include <stdexcept>
#include <string>

namespace ldshift {

// Base of every error the library throws. The CLI maps the subclasses to exit
// codes: InvalidArgument/AlphabetMismatch -> 1, CheckFailure and
// AbsoluteContinuityError -> 2, ConvergenceError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class AlphabetMismatch : public Error {
 public:
  using Error::Error;
};

// A word enumeration would exceed the configured budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

// Some word has positive mass under P but zero mass under the reference measure.
class AbsoluteContinuityError : public Error {
 public:
  AbsoluteContinuityError(const std::string& what, std::string witness)
      : Error(what), witness_(std::move(witness)) {}

  const std::string& witness() const noexcept { return witness_; }

 private:
  std::string witness_;
};

// A series, bisection or truncated sum ran out of budget before certifying
// its result.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gap = 0.0) : Error(what), gap_(gap) {}

  double gap() const noexcept { return gap_; }

 private:
  double gap_;
};

// A verified identity or certificate failed its contract.
class CheckFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace ldshift
