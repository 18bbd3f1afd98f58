#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hodo {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grammar or lookup failure while parsing an expression string.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at offset " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class DivideByZeroError : public EvalError {
 public:
  DivideByZeroError() : EvalError("division by zero") {}
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Requesting derivatives where det A vanishes.
class BlowupLocusError : public Error {
 public:
  BlowupLocusError() : Error("on-blowup-locus") {}
};

/// Mixed hodograph system in which some variable appears in no equation.
class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

/// Continuation in t failed before any determinant sign change.
class ContinuationError : public Error {
 public:
  ContinuationError(const std::string& what, std::optional<double> lastGoodT)
      : Error(what), lastGoodT_(lastGoodT) {}
  std::optional<double> last_good_t() const { return lastGoodT_; }

 private:
  std::optional<double> lastGoodT_;
};

class CflError : public Error {
 public:
  CflError(const std::string& what, int step, double t)
      : Error(what), step_(step), t_(t) {}
  int step() const { return step_; }
  double t() const { return t_; }

 private:
  int step_;
  double t_;
};

/// NaN/Inf fields or derivative magnitudes past the catastrophe threshold.
class BlowupDetectedError : public Error {
 public:
  explicit BlowupDetectedError(double t)
      : Error("blow-up detected at t=" + std::to_string(t)), t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

class NoFeasibleProbesError : public Error {
 public:
  NoFeasibleProbesError() : Error("no-feasible-probes") {}
};

}  // namespace hodo
