#include "covphase/presymplectic.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "covphase/error.hpp"

namespace covphase {

QuadraticHamiltonian::QuadraticHamiltonian(Matrix Q, Vector b, double c)
    : Q_(std::move(Q)), b_(std::move(b)), c_(c) {
  if (Q_.rows() != Q_.cols()) throw Error(ErrorKind::DimensionMismatch, "Q must be square");
  if (b_.size() != Q_.rows()) throw Error(ErrorKind::DimensionMismatch, "b length differs from Q");
  double defect = symmetry_defect(Q_);
  if (defect > 1e-12)
    throw Error(ErrorKind::NonSymmetric, "Q asymmetric by " + std::to_string(defect));
}

QuadraticHamiltonian QuadraticHamiltonian::homogeneous(Matrix Q) {
  Vector b = Vector::Zero(Q.rows());
  return QuadraticHamiltonian(std::move(Q), std::move(b), 0.0);
}

double QuadraticHamiltonian::value(const Vector& z) const {
  return 0.5 * z.dot(Q_ * z) + b_.dot(z) + c_;
}

Vector QuadraticHamiltonian::gradient(const Vector& z) const { return Q_ * z + b_; }

PresymplecticSystem::PresymplecticSystem(Matrix omega, QuadraticHamiltonian h,
                                         std::vector<std::string> labels)
    : omega_(std::move(omega)), h_(std::move(h)), labels_(std::move(labels)) {
  if (omega_.rows() != omega_.cols()) throw Error(ErrorKind::DimensionMismatch, "omega must be square");
  if (h_.dim() != omega_.rows())
    throw Error(ErrorKind::DimensionMismatch, "hamiltonian dim " + std::to_string(h_.dim()) +
                                                  " vs omega dim " + std::to_string(omega_.rows()));
  if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != omega_.rows())
    throw Error(ErrorKind::DimensionMismatch, "label count differs from dim");
  double defect = antisymmetry_defect(omega_);
  if (defect > 1e-12)
    throw Error(ErrorKind::NonAntisymmetric, "omega asymmetric part " + std::to_string(defect));
}

PresymplecticSystem PresymplecticSystem::unchecked(Matrix omega, QuadraticHamiltonian h) {
  PresymplecticSystem s;
  s.omega_ = std::move(omega);
  s.h_ = std::move(h);
  return s;
}

LinearSubspace LinearSubspace::full(Eigen::Index n) {
  return {Matrix::Identity(n, n), Vector::Zero(n)};
}

LinearSubspace LinearSubspace::from_basis(Matrix basis) {
  Vector o = Vector::Zero(basis.rows());
  return {std::move(basis), std::move(o)};
}

Vector LinearSubspace::coordinates(const Vector& z, double* residual) const {
  if (z.size() != ambient_dim()) throw Error(ErrorKind::DimensionMismatch, "point has wrong ambient dim");
  Vector w = basis.transpose() * (z - offset);
  if (residual) *residual = (embed(w) - z).norm();
  return w;
}

double LinearSubspace::orthonormality_defect() const {
  return max_abs(basis.transpose() * basis - Matrix::Identity(dim(), dim()));
}

const char* to_string(Classification c) {
  return c == Classification::Symplectic ? "Symplectic" : "Gauge";
}

LinearSubspace kernel(const Matrix& omega, double rank_rtol) {
  if (omega.rows() != omega.cols()) throw Error(ErrorKind::DimensionMismatch, "omega must be square");
  if (!(rank_rtol > 0.0 && rank_rtol < 1.0))
    throw Error(ErrorKind::InvalidArgument, "rank_rtol must lie in (0,1)");
  double defect = antisymmetry_defect(omega);
  if (defect > 1e-10)
    throw Error(ErrorKind::NonAntisymmetric, "omega + omega^T has entry " + std::to_string(defect));
  return LinearSubspace::from_basis(null_space(omega, 0.0, rank_rtol));
}

namespace {

struct Scales {
  double omega;
  double hamiltonian;
};

Scales scales_of(const PresymplecticSystem& s) {
  const auto& h = s.hamiltonian();
  double sh = std::max(h.Q().norm(), h.b().norm());
  return {std::max(s.omega().norm(), 1e-300), std::max(sh, 1e-300)};
}

bool is_identity_basis(const LinearSubspace& S) {
  return S.dim() == S.ambient_dim() && S.basis.isIdentity(0.0);
}

Matrix complement_basis(const Matrix& omega, const LinearSubspace& S, double tol) {
  // {X : Omega(X, Y) = 0 for all Y in S}  <=>  B^T omega^T X = 0
  if (is_identity_basis(S)) return null_space(omega.transpose(), tol);
  return null_space(S.basis.transpose() * omega.transpose(), tol);
}

// One pass of the algorithm. Returns nothing if the condition holds identically.
std::optional<std::pair<LinearSubspace, ConstraintStep>> restrict_once(const PresymplecticSystem& system,
                                                                      const LinearSubspace& cur,
                                                                      double rank_rtol) {
  const Scales sc = scales_of(system);
  const double tol_h = rank_rtol * sc.hamiltonian;
  const auto& h = system.hamiltonian();

  Matrix P = complement_basis(system.omega(), cur, rank_rtol * sc.omega);
  if (P.cols() == 0) return std::nullopt;

  ConstraintStep step;
  step.rows = P.transpose() * h.Q();
  step.rhs = -P.transpose() * h.b();
  const bool ident = is_identity_basis(cur);
  Matrix C = ident ? step.rows : Matrix(step.rows * cur.basis);
  Vector d = step.rhs - step.rows * cur.offset;

  if (C.norm() <= tol_h) {
    if (d.norm() > tol_h)
      throw Error(ErrorKind::EmptyFinalManifold, "constant constraint violated by " + std::to_string(d.norm()));
    return std::nullopt;
  }

  Matrix N = null_space(C, tol_h);
  const Eigen::Index rank = C.cols() - N.cols();
  if (rank == 0) {
    if (d.norm() > tol_h)
      throw Error(ErrorKind::EmptyFinalManifold, "constant constraint violated by " + std::to_string(d.norm()));
    return std::nullopt;
  }

  Vector w0 = Vector::Zero(C.cols());
  if (d.norm() > 0.0) {
    Eigen::BDCSVD<Matrix> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv(0) > 0) svd.setThreshold(tol_h / sv(0));
    w0 = svd.solve(d);
    if ((C * w0 - d).norm() > tol_h * (1.0 + d.norm()))
      throw Error(ErrorKind::EmptyFinalManifold, "affine constraints are inconsistent");
  }

  LinearSubspace next;
  next.basis = orthonormalize(ident ? N : Matrix(cur.basis * N));
  Vector o = cur.offset + (ident ? w0 : Vector(cur.basis * w0));
  next.offset = o - next.basis * (next.basis.transpose() * o);
  step.new_constraints = rank;
  return std::make_pair(std::move(next), std::move(step));
}

void finalize(const PresymplecticSystem& system, ConstraintChainResult& r) {
  const Matrix& B = r.final_space.basis;
  const Vector& o = r.final_space.offset;
  const auto& h = system.hamiltonian();
  Matrix W = B.transpose() * system.omega() * B;
  r.omega_final = 0.5 * (W - W.transpose());
  Matrix Qf = B.transpose() * h.Q() * B;
  Qf = 0.5 * (Qf + Qf.transpose());
  Vector bf = B.transpose() * (h.Q() * o + h.b());
  r.hamiltonian_final = QuadraticHamiltonian(std::move(Qf), std::move(bf), h.value(o));
  r.kernel_final = kernel(r.omega_final, r.rank_rtol);
  r.classification = r.kernel_final.dim() == 0 ? Classification::Symplectic : Classification::Gauge;
}

}  // namespace

LinearSubspace orthosymplectic_complement(const PresymplecticSystem& system, const LinearSubspace& subspace,
                                          double rank_rtol) {
  if (subspace.ambient_dim() != system.dim())
    throw Error(ErrorKind::DimensionMismatch, "subspace ambient dim " + std::to_string(subspace.ambient_dim()) +
                                                  " vs system dim " + std::to_string(system.dim()));
  return LinearSubspace::from_basis(complement_basis(system.omega(), subspace, rank_rtol * scales_of(system).omega));
}

ConstraintChainResult constraint_algorithm(const PresymplecticSystem& system, double rank_rtol, int max_iter) {
  if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");
  if (!(rank_rtol > 0.0 && rank_rtol < 1.0))
    throw Error(ErrorKind::InvalidArgument, "rank_rtol must lie in (0,1)");
  ConstraintChainResult r;
  r.rank_rtol = rank_rtol;
  r.chain.push_back(LinearSubspace::full(system.dim()));
  bool stable = false;
  for (int it = 0; it < max_iter; ++it) {
    auto next = restrict_once(system, r.chain.back(), rank_rtol);
    if (!next) {
      stable = true;
      break;
    }
    r.chain.push_back(std::move(next->first));
    r.steps.push_back(std::move(next->second));
  }
  if (!stable) {
    // the last allowed restriction may itself have been the fixed point
    if (restrict_once(system, r.chain.back(), rank_rtol))
      throw Error(ErrorKind::NoConvergence, "no fixed point after " + std::to_string(max_iter) + " iterations");
  }
  r.iterations = static_cast<int>(r.steps.size());
  r.final_space = r.chain.back();
  finalize(system, r);
  return r;
}

ConstraintChainResult pin_final(const PresymplecticSystem& system, const ConstraintChainResult& result,
                                const Matrix& rows, const Vector& rhs) {
  const LinearSubspace& F = result.final_space;
  if (rows.cols() != system.dim() || rows.rows() != rhs.size())
    throw Error(ErrorKind::DimensionMismatch, "pin rows must be m x dim with rhs of length m");
  Matrix C = rows * F.basis;
  Vector d = rhs - rows * F.offset;
  const double tol = result.rank_rtol * std::max(1.0, rows.norm());
  Matrix N = null_space(C, tol);
  Vector w0 = Vector::Zero(C.cols());
  if (d.norm() > 0.0) {
    w0 = C.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(d);
    if ((C * w0 - d).norm() > tol * (1.0 + d.norm()))
      throw Error(ErrorKind::EmptyFinalManifold, "pinned conditions are inconsistent with the final manifold");
  }
  ConstraintChainResult r = result;
  LinearSubspace pinned;
  pinned.basis = orthonormalize(F.basis * N);
  Vector o = F.offset + F.basis * w0;
  pinned.offset = o - pinned.basis * (pinned.basis.transpose() * o);
  r.final_space = std::move(pinned);
  // pinning can in principle break stability; continue the algorithm if so
  for (int it = 0; it < 64; ++it) {
    auto next = restrict_once(system, r.final_space, r.rank_rtol);
    if (!next) break;
    r.steps.push_back(std::move(next->second));
    r.final_space = std::move(next->first);
    r.chain.push_back(r.final_space);
  }
  r.iterations = static_cast<int>(r.steps.size());
  finalize(system, r);
  return r;
}

double stability_defect(const PresymplecticSystem& system, const ConstraintChainResult& result,
                        const Matrix& probes) {
  const LinearSubspace& F = result.final_space;
  Matrix P = orthosymplectic_complement(system, F, result.rank_rtol).basis;
  double worst = 0.0;
  for (Eigen::Index s = 0; s < probes.cols(); ++s) {
    Vector z = F.embed(probes.col(s));
    Vector g = P.transpose() * system.hamiltonian().gradient(z);
    double v = g.size() ? g.cwiseAbs().maxCoeff() / (1.0 + z.norm()) : 0.0;
    worst = std::max(worst, v);
  }
  return worst;
}

FlatMap::FlatMap(const Matrix& omega, const Matrix* projector, double rank_rtol) : omega_(omega) {
  const Eigen::Index k = omega.rows();
  kernel_ = kernel(omega, rank_rtol).basis;
  if (projector) {
    if (projector->rows() != k || projector->cols() != k)
      throw Error(ErrorKind::DimensionMismatch, "projector must be k x k");
    horizontal_ = null_space(*projector, 1e-8 * std::max(1.0, projector->norm()));
    if (horizontal_.cols() + kernel_.cols() != k)
      throw Error(ErrorKind::KernelMismatch, "projector rank " + std::to_string(k - horizontal_.cols()) +
                                                 " differs from kernel dim " + std::to_string(kernel_.cols()));
  } else {
    if (kernel_.cols() > 0)
      throw Error(ErrorKind::DegenerateWithoutConnection,
                  "omega has kernel of dim " + std::to_string(kernel_.cols()) + " and no projector was given");
    horizontal_ = Matrix::Identity(k, k);
  }
  Matrix Wh = horizontal_.transpose() * omega.transpose() * horizontal_;
  lu_.compute(Wh);
}

double FlatMap::kernel_overlap(const Vector& covector) const {
  if (kernel_.cols() == 0) return 0.0;
  double n = covector.norm();
  if (n == 0.0) return 0.0;
  return (kernel_.transpose() * covector).norm() / n;
}

Vector FlatMap::solve(const Vector& covector) const {
  if (covector.size() != dim())
    throw Error(ErrorKind::DimensionMismatch, "covector length " + std::to_string(covector.size()) +
                                                  " vs dim " + std::to_string(dim()));
  double overlap = kernel_overlap(covector);
  if (overlap > 1e-9)
    throw Error(ErrorKind::InconsistentCovector, "covector pairs with ker omega (relative " +
                                                     std::to_string(overlap) + ")");
  if (dim() == 0) return Vector();
  Vector y = lu_.solve(horizontal_.transpose() * covector);
  return horizontal_ * y;
}

Vector flat_solve(const Matrix& omega, const Vector& covector, const Matrix* projector, double rank_rtol) {
  return FlatMap(omega, projector, rank_rtol).solve(covector);
}

nlohmann::json system_to_json(const PresymplecticSystem& s) {
  const auto& h = s.hamiltonian();
  nlohmann::json j{{"dim", s.dim()},
                   {"omega", matrix_to_json(s.omega())},
                   {"hamiltonian", {{"Q", matrix_to_json(h.Q())}, {"b", vector_to_json(h.b())}, {"c", h.c()}}}};
  if (!s.labels().empty()) j["labels"] = s.labels();
  return j;
}

PresymplecticSystem system_from_json(const nlohmann::json& j) {
  Matrix omega = matrix_from_json(j.at("omega"));
  const auto& hj = j.at("hamiltonian");
  Matrix Q = matrix_from_json(hj.at("Q"));
  Vector b = hj.contains("b") ? vector_from_json(hj.at("b")) : Vector(Vector::Zero(Q.rows()));
  double c = hj.value("c", 0.0);
  std::vector<std::string> labels;
  if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
  if (j.contains("dim") && j.at("dim").get<Eigen::Index>() != omega.rows())
    throw Error(ErrorKind::DimensionMismatch, "dim field disagrees with omega");
  return PresymplecticSystem(std::move(omega), QuadraticHamiltonian(std::move(Q), std::move(b), c), std::move(labels));
}

}  // namespace covphase
