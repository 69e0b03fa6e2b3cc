#pragma once

#include <stdexcept>
#include <string>

namespace zrp {

// Base class for every error raised by the library. The CLI maps
// ConfigError to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IncrementViolation : public Error {
 public:
  explicit IncrementViolation(long k, double increment)
      : Error("rate increment g(" + std::to_string(k) + ") - g(" + std::to_string(k - 1) +
              ") = " + std::to_string(increment) + " outside [gamma_minus, gamma_plus]"),
        k_(k) {}
  long k() const noexcept { return k_; }

 private:
  long k_;
};

class NonzeroAtZero : public Error {
 public:
  NonzeroAtZero() : Error("rate function must satisfy g(0) = 0") {}
};

class ToleranceUnreachable : public Error {
 public:
  using Error::Error;
};

class BracketFailure : public Error {
 public:
  using Error::Error;
};

class TableOverflow : public Error {
 public:
  using Error::Error;
};

class InconsistentState : public Error {
 public:
  using Error::Error;
};

class StateSpaceTooLarge : public Error {
 public:
  using Error::Error;
};

class SupportViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace zrp
