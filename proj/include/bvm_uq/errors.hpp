#pragma once

#include <stdexcept>
#include <string>

namespace bvm {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class AliasingError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failures (exit code 3 at the command line).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class RangeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DefinitenessError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Nonpositive conductivity at node (ix, iy).
class CoefficientError : public NumericalError {
 public:
  CoefficientError(int ix, int iy, double value)
      : NumericalError("nonpositive coefficient " + std::to_string(value) + " at node (" +
                       std::to_string(ix) + ", " + std::to_string(iy) + ")"),
        ix_(ix),
        iy_(iy) {}
  int ix() const noexcept { return ix_; }
  int iy() const noexcept { return iy_; }

 private:
  int ix_;
  int iy_;
};

/// Conjugate gradients stopped at max_iter above tolerance.
class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : NumericalError(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Statistical-quality failures (exit code 4 at the command line).
class QualityError : public Error {
 public:
  using Error::Error;
};

class ChainQualityError : public QualityError {
 public:
  using QualityError::QualityError;
};

class TuningError : public QualityError {
 public:
  TuningError(const std::string& what, double beta, double acceptance)
      : QualityError(what), beta_(beta), acceptance_(acceptance) {}
  double beta() const noexcept { return beta_; }
  double acceptance() const noexcept { return acceptance_; }

 private:
  double beta_;
  double acceptance_;
};

class ExperimentError : public QualityError {
 public:
  using QualityError::QualityError;
};

}  // namespace bvm
