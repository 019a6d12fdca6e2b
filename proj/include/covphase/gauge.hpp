#pragma once

#include <Eigen/SparseCholesky>

#include "covphase/lattice.hpp"
#include "covphase/presymplectic.hpp"

namespace covphase {

class SliceModel;

// Pseudo-inverse of the periodic lattice Laplacian: returns the mean-zero psi
// with lap psi = rhs - mean(rhs). One site is pinned to make the reduced
// operator positive definite; the mean is removed afterwards.
class PoissonSolver {
 public:
  explicit PoissonSolver(const SpatialLattice& lattice);
  Vector solve(const Vector& rhs) const;
  Eigen::Index sites() const { return n_; }

 private:
  Eigen::Index n_ = 0;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

// grad lap^+ div on component-major vector fields (rows j*N + site).
class LongitudinalProjector {
 public:
  explicit LongitudinalProjector(const SpatialLattice& lattice);
  Vector apply(const Vector& v) const;
  Matrix apply(const Matrix& V) const;
  const SpatialLattice& lattice() const { return lattice_; }

 private:
  SpatialLattice lattice_;
  SparseMatrix grad_;
  SparseMatrix div_;
  PoissonSolver poisson_;
};

struct HelmholtzParts {
  Matrix transverse;    // N x d
  Matrix longitudinal;  // N x d
};

HelmholtzParts helmholtz_decompose(const SpatialLattice& lattice, const Matrix& field);

// Idempotent map on final-space coordinates whose range is ker Omega_inf.
class ConnectionProjector {
 public:
  ConnectionProjector() = default;
  ConnectionProjector(Matrix P, Eigen::Index rank, double idempotency, double range_residual)
      : P_(std::move(P)), rank_(rank), idempotency_(idempotency), range_residual_(range_residual) {}
  Eigen::Index dim() const { return P_.rows(); }
  Eigen::Index rank() const { return rank_; }
  const Matrix& matrix() const { return P_; }
  Vector apply(const Vector& v) const { return P_ * v; }
  double idempotency_residual() const { return idempotency_; }
  double range_residual() const { return range_residual_; }
  nlohmann::json diagnostics() const;

 private:
  Matrix P_;
  Eigen::Index rank_ = 0;
  double idempotency_ = 0.0;
  double range_residual_ = 0.0;
};

// Coulomb connection: projects the a-block of a final-space tangent vector onto
// its gradient part and drops every other block.
ConnectionProjector coulomb_projector(const ConstraintChainResult& result, const SliceModel& model);

}  // namespace covphase
