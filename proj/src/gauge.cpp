#include "covphase/gauge.hpp"

#include <Eigen/Eigenvalues>

#include "covphase/error.hpp"
#include "covphase/slicing.hpp"

namespace covphase {

PoissonSolver::PoissonSolver(const SpatialLattice& lattice) : n_(lattice.sites()) {
  if (lattice.dims() < 1) throw Error(ErrorKind::InvalidArgument, "Poisson solver needs d >= 1");
  // -lap with site 0 removed is positive definite on a connected periodic lattice
  SparseMatrix A = -lattice.laplacian();
  A = SparseMatrix(A.bottomRightCorner(n_ - 1, n_ - 1));
  ldlt_.compute(A);
  if (ldlt_.info() != Eigen::Success) throw Error(ErrorKind::InvalidArgument, "Poisson factorization failed");
}

Vector PoissonSolver::solve(const Vector& rhs) const {
  if (rhs.size() != n_) throw Error(ErrorKind::ShapeMismatch, "Poisson rhs has wrong length");
  Vector f = rhs.array() - rhs.mean();
  Vector psi = Vector::Zero(n_);
  psi.tail(n_ - 1) = ldlt_.solve(Vector(-f.tail(n_ - 1)));
  psi.array() -= psi.mean();
  return psi;
}

LongitudinalProjector::LongitudinalProjector(const SpatialLattice& lattice)
    : lattice_(lattice), grad_(lattice.gradient()), div_(lattice.divergence()), poisson_(lattice) {}

Vector LongitudinalProjector::apply(const Vector& v) const {
  if (v.size() != grad_.rows()) throw Error(ErrorKind::ShapeMismatch, "vector field has wrong length");
  return grad_ * poisson_.solve(div_ * v);
}

Matrix LongitudinalProjector::apply(const Matrix& V) const {
  Matrix out(V.rows(), V.cols());
  for (Eigen::Index c = 0; c < V.cols(); ++c) out.col(c) = apply(Vector(V.col(c)));
  return out;
}

HelmholtzParts helmholtz_decompose(const SpatialLattice& lattice, const Matrix& field) {
  if (field.rows() != lattice.sites() || field.cols() != lattice.dims())
    throw Error(ErrorKind::ShapeMismatch, "vector field must be N_sites x d");
  LongitudinalProjector L(lattice);
  Vector flat = field.reshaped();
  Matrix lon = L.apply(flat).reshaped(field.rows(), field.cols());
  return {field - lon, lon};
}

nlohmann::json ConnectionProjector::diagnostics() const {
  return {{"dim", dim()},
          {"rank", rank_},
          {"idempotency_residual", idempotency_},
          {"range_residual", range_residual_}};
}

ConnectionProjector coulomb_projector(const ConstraintChainResult& result, const SliceModel& model) {
  if (result.classification != Classification::Gauge)
    throw Error(ErrorKind::NotGauge, "classification is Symplectic; no connection needed");
  if (model.spec().kind() != ModelKind::Electrodynamics)
    throw Error(ErrorKind::UnsupportedSpec, "Coulomb connection is defined for the vector-potential block only");
  const Matrix& B = result.final_space.basis;
  if (B.rows() != model.dim()) throw Error(ErrorKind::DimensionMismatch, "result does not belong to this model");

  const auto& ab = model.block("a");
  Matrix A = B.middleRows(ab.offset, ab.size);
  Matrix LA = model.longitudinal().apply(A);
  Matrix P = A.transpose() * LA;
  P = 0.5 * (P + P.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(P);
  Eigen::Index rank = (es.eigenvalues().array() > 0.5).count();
  double idem = max_abs(P * P - P);
  double range = max_abs(result.omega_final * P);
  const Matrix& K = result.kernel_final.basis;
  double containment = K.cols() ? max_abs(K - P * K) : 0.0;
  if (rank != K.cols() || containment > 1e-8 || range > 1e-8)
    throw Error(ErrorKind::KernelMismatch, "projector rank " + std::to_string(rank) + " vs kernel dim " +
                                               std::to_string(K.cols()) + ", containment " +
                                               std::to_string(containment) + ", range " + std::to_string(range));
  return ConnectionProjector(std::move(P), rank, idem, range);
}

}  // namespace covphase
