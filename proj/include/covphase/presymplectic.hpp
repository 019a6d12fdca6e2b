#pragma once

#include <string>
#include <vector>

#include "covphase/linalg.hpp"

namespace covphase {

class QuadraticHamiltonian {
 public:
  QuadraticHamiltonian() = default;
  // H(z) = 1/2 z^T Q z + b^T z + c
  QuadraticHamiltonian(Matrix Q, Vector b, double c = 0.0);
  static QuadraticHamiltonian homogeneous(Matrix Q);

  Eigen::Index dim() const { return Q_.rows(); }
  const Matrix& Q() const { return Q_; }
  const Vector& b() const { return b_; }
  double c() const { return c_; }

  double value(const Vector& z) const;
  Vector gradient(const Vector& z) const;

 private:
  Matrix Q_;
  Vector b_;
  double c_ = 0.0;
};

class PresymplecticSystem {
 public:
  PresymplecticSystem() = default;
  PresymplecticSystem(Matrix omega, QuadraticHamiltonian h, std::vector<std::string> labels = {});

  Eigen::Index dim() const { return omega_.rows(); }
  const Matrix& omega() const { return omega_; }
  const QuadraticHamiltonian& hamiltonian() const { return h_; }
  const std::vector<std::string>& labels() const { return labels_; }

  // Bypasses validation; only for fault-injection tests of downstream checks.
  static PresymplecticSystem unchecked(Matrix omega, QuadraticHamiltonian h);

 private:
  Matrix omega_;
  QuadraticHamiltonian h_;
  std::vector<std::string> labels_;
};

struct LinearSubspace {
  Matrix basis;   // ambient x k, orthonormal columns
  Vector offset;  // ambient

  static LinearSubspace full(Eigen::Index n);
  static LinearSubspace from_basis(Matrix basis);
  Eigen::Index ambient_dim() const { return basis.rows(); }
  Eigen::Index dim() const { return basis.cols(); }
  Vector embed(const Vector& w) const { return basis * w + offset; }
  // coordinates of an ambient point, plus its distance from the subspace
  Vector coordinates(const Vector& z, double* residual = nullptr) const;
  double orthonormality_defect() const;
};

enum class Classification { Symplectic, Gauge };
const char* to_string(Classification c);

struct ConstraintStep {
  Matrix rows;    // ambient covectors of the condition P^T (Q z + b) = 0
  Vector rhs;     // rows * z = rhs
  Eigen::Index new_constraints = 0;
};

struct ConstraintChainResult {
  std::vector<LinearSubspace> chain;
  std::vector<ConstraintStep> steps;
  LinearSubspace final_space;  // equals chain.back() unless extra pins were applied
  Matrix omega_final;
  QuadraticHamiltonian hamiltonian_final;
  LinearSubspace kernel_final;  // inside final-space coordinates
  Classification classification = Classification::Symplectic;
  int iterations = 0;
  double rank_rtol = kDefaultRankRtol;
};

LinearSubspace kernel(const Matrix& omega, double rank_rtol = kDefaultRankRtol);

LinearSubspace orthosymplectic_complement(const PresymplecticSystem& system,
                                          const LinearSubspace& subspace,
                                          double rank_rtol = kDefaultRankRtol);

ConstraintChainResult constraint_algorithm(const PresymplecticSystem& system,
                                           double rank_rtol = kDefaultRankRtol,
                                           int max_iter = 64);

// Intersects the final manifold with {rows * z = rhs}, e.g. to fix arbitrary
// gauge parameters left free by the algorithm. The intersection must again be
// stable; the pulled-back data and classification are recomputed.
ConstraintChainResult pin_final(const PresymplecticSystem& system, const ConstraintChainResult& result,
                                const Matrix& rows, const Vector& rhs);

// Largest violation of the stability condition on the final manifold, probed at
// the given final-space points.
double stability_defect(const PresymplecticSystem& system, const ConstraintChainResult& result,
                        const Matrix& probes);

// Solves i_X Omega = c, i.e. Omega^T X = c, optionally with projector * X = 0.
class FlatMap {
 public:
  FlatMap(const Matrix& omega, const Matrix* projector = nullptr, double rank_rtol = kDefaultRankRtol);
  Vector solve(const Vector& covector) const;
  const Matrix& kernel_basis() const { return kernel_; }
  const Matrix& horizontal_basis() const { return horizontal_; }
  Eigen::Index dim() const { return omega_.rows(); }
  // ||K^T c|| / ||c||: zero iff c annihilates the kernel
  double kernel_overlap(const Vector& covector) const;

 private:
  Matrix omega_;
  Matrix kernel_;
  Matrix horizontal_;
  Eigen::PartialPivLU<Matrix> lu_;
};

Vector flat_solve(const Matrix& omega, const Vector& covector, const Matrix* projector = nullptr,
                  double rank_rtol = kDefaultRankRtol);

nlohmann::json system_to_json(const PresymplecticSystem& s);
PresymplecticSystem system_from_json(const nlohmann::json& j);

}  // namespace covphase
