#include "covphase/error.hpp"

namespace covphase {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonAntisymmetric: return "NonAntisymmetric";
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyFinalManifold: return "EmptyFinalManifold";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateWithoutConnection: return "DegenerateWithoutConnection";
    case ErrorKind::InconsistentCovector: return "InconsistentCovector";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnsupportedSpec: return "UnsupportedSpec";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NotGauge: return "NotGauge";
    case ErrorKind::KernelMismatch: return "KernelMismatch";
    case ErrorKind::MissingProjector: return "MissingProjector";
    case ErrorKind::NonDiagonalizable: return "NonDiagonalizable";
    case ErrorKind::NotHorizontal: return "NotHorizontal";
    case ErrorKind::OutOfWindow: return "OutOfWindow";
    case ErrorKind::GaugeVariantObservable: return "GaugeVariantObservable";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace covphase
