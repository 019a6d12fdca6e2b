#pragma once

#include <stdexcept>
#include <string>

namespace covphase {

enum class ErrorKind {
  NonAntisymmetric,
  NonSymmetric,
  DimensionMismatch,
  EmptyFinalManifold,
  NoConvergence,
  DegenerateWithoutConnection,
  InconsistentCovector,
  ShapeMismatch,
  UnsupportedSpec,
  IndexOutOfRange,
  LengthMismatch,
  NotGauge,
  KernelMismatch,
  MissingProjector,
  NonDiagonalizable,
  NotHorizontal,
  OutOfWindow,
  GaugeVariantObservable,
  InvalidConfig,
  InvalidArgument,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace covphase
