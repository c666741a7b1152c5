#pragma once
#include <stdexcept>
#include <string>

namespace curv {

// Base class for all toolkit errors. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied value (out-of-range parameter, malformed file, ...).
class InvalidParamError : public Error {
public:
  using Error::Error;
};

// Quadratic form of the energy density is identically zero (or close).
class DegenerateFormError : public Error {
public:
  using Error::Error;
};

// Linear part of the energy density is inconsistent with a finite center.
class NoCenterError : public Error {
public:
  using Error::Error;
};

// Iso-surface extraction found no crossing cells.
class EmptySurfaceError : public Error {
public:
  using Error::Error;
};

// Histogram or scaler input carries no mass / no spread.
class EmptyInputError : public Error {
public:
  using Error::Error;
};

class DegenerateDataError : public Error {
public:
  using Error::Error;
};

// Tensor dimension mismatch in the neural stack.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Artifacts (checkpoints, encodings, fields) whose metadata disagree.
class IncompatibleError : public Error {
public:
  using Error::Error;
};

// The flow produced non-finite values; carries the offending step.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& msg, long step) : Error(msg), step_(step) {}
  long step() const { return step_; }

private:
  long step_;
};

}  // namespace curv
