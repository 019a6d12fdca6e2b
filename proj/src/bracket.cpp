#include "covphase/bracket.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <complex>
#include <sstream>
#include <thread>

#include "covphase/error.hpp"

namespace covphase {

const char* to_string(FlowMode m) { return m == FlowMode::Spectral ? "spectral" : "leapfrog"; }

namespace {

using cd = std::complex<double>;

// phi1(z) = (e^z - 1)/z at z = -i theta
cd phi1_imag(double theta) {
  const double a = std::abs(theta);
  double s, c;
  if (a < 1e-4) {
    const double t2 = theta * theta;
    s = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;   // sin(theta)/theta
    c = theta * (0.5 - t2 / 24.0);          // (1 - cos(theta))/theta
  } else {
    s = std::sin(theta) / theta;
    const double h = std::sin(0.5 * theta);
    c = 2.0 * h * h / theta;
  }
  return {s, -c};
}

}  // namespace

bool FlowOperator::build_spectral(std::string* why) {
  const Eigen::Index kh = Qh_.rows();
  if (kh == 0) {
    L_.resize(0, 0);
    return true;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(Qh_);
  const Vector& lam = es.eigenvalues();
  const double big = lam.cwiseAbs().maxCoeff();
  const double tol = 1e-10 * big;
  const bool has_pos = (lam.array() > tol).any();
  const bool has_neg = (lam.array() < -tol).any();
  if (has_pos && has_neg) {
    *why = "horizontal Hamiltonian is indefinite";
    return false;
  }
  sigma_ = has_neg ? -1.0 : 1.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < kh; ++i)
    if (std::abs(lam(i)) > tol) keep.push_back(i);
  L_.resize(kh, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    L_.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(sigma_ * lam(keep[c]));
  JL_ = Jh_ * L_;
  Matrix S = L_.transpose() * JL_;
  S = 0.5 * (S - S.transpose());
  Eigen::MatrixXcd H = cd(0.0, 1.0) * S.cast<cd>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hs(H);
  if (hs.info() != Eigen::Success) {
    *why = "eigen-decomposition of the reduced generator failed";
    return false;
  }
  V_ = hs.eigenvectors();
  mu_ = hs.eigenvalues();
  // modes in the null space of L^T are pure drift; they show up as zero frequency
  freqs_ = Vector::Zero(kh);
  Eigen::Index r = mu_.size();
  for (Eigen::Index i = 0; i < r; ++i) freqs_(i) = std::abs(mu_(i));
  std::sort(freqs_.data(), freqs_.data() + kh);
  return true;
}

void FlowOperator::build_leapfrog(const SliceModel& model) {
  const auto& pb = model.block(model.momentum_block());
  Matrix BC = basis_ * C_;
  Matrix Mp = BC.middleRows(pb.offset, pb.size);
  Matrix Mrest(BC.rows() - pb.size, BC.cols());
  Mrest << BC.topRows(pb.offset), BC.bottomRows(BC.rows() - pb.offset - pb.size);
  Matrix U = null_space(Mp, 1e-10);
  Matrix W = null_space(Mrest, 1e-10);
  const Eigen::Index kh = C_.cols();
  if (U.cols() + W.cols() != kh || U.cols() != W.cols())
    throw Error(ErrorKind::NonDiagonalizable, "no canonical position/momentum split of the final space");
  Matrix Oh = C_.transpose() * omega_ * C_;
  double lag = std::max(max_abs(U.transpose() * Oh * U), max_abs(W.transpose() * Oh * W));
  double sep = max_abs(U.transpose() * Qh_ * W);
  if (lag > 1e-9 || sep > 1e-9 * std::max(1.0, max_abs(Qh_)))
    throw Error(ErrorKind::NonDiagonalizable, "position/momentum split is not Lagrangian or not separable");
  Matrix G = U.transpose() * Oh * W;
  Matrix K = U.transpose() * Qh_ * U;
  Matrix M = W.transpose() * Qh_ * W;
  Eigen::PartialPivLU<Matrix> glu(G);
  Dp_ = -glu.solve(K);
  Dx_ = G.transpose().partialPivLu().solve(M);
  nq_ = U.cols();
  T_.resize(kh, kh);
  T_ << U, W;
  T_lu_.compute(T_);
}

void FlowOperator::leapfrog_steps(Eigen::Ref<Vector> x, Eigen::Ref<Vector> p, double t, bool transpose) const {
  if (t == 0.0) return;
  const long n = std::max(1L, static_cast<long>(std::ceil(std::abs(t) / lf_dt_ - 1e-9)));
  const double tau = t / static_cast<double>(n);
  for (long s = 0; s < n; ++s) {
    if (!transpose) {
      p += 0.5 * tau * (Dp_ * x);
      x += tau * (Dx_ * p);
      p += 0.5 * tau * (Dp_ * x);
    } else {
      x += 0.5 * tau * (Dp_.transpose() * p);
      p += tau * (Dx_.transpose() * x);
      x += 0.5 * tau * (Dp_.transpose() * p);
    }
  }
}

Vector FlowOperator::apply_h(const Vector& y, double t) const {
  if (t == 0.0 || y.size() == 0) return y;
  if (mode_ == FlowMode::Leapfrog) {
    Vector z = T_lu_.solve(y);
    leapfrog_steps(z.head(nq_), z.tail(z.size() - nq_), t, false);
    return T_ * z;
  }
  if (L_.cols() == 0) return y;
  Eigen::VectorXcd a = V_.adjoint() * (L_.transpose() * y).cast<cd>();
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) *= phi1_imag(sigma_ * mu_(i) * t);
  Vector corr = (V_ * a).real();
  return y + sigma_ * t * (JL_ * corr);
}

Vector FlowOperator::apply_h_transpose(const Vector& c, double t) const {
  if (t == 0.0 || c.size() == 0) return c;
  if (mode_ == FlowMode::Leapfrog) {
    Vector z = T_.transpose() * c;
    // transposed steps: roles of the two blocks swap in the composition
    Vector x = z.head(nq_), p = z.tail(z.size() - nq_);
    leapfrog_steps(x, p, t, true);
    Vector out(z.size());
    out << x, p;
    return T_lu_.transpose().solve(out);
  }
  if (L_.cols() == 0) return c;
  Eigen::VectorXcd a = V_.transpose() * (JL_.transpose() * c).cast<cd>();
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) *= phi1_imag(sigma_ * mu_(i) * t);
  Vector corr = (V_.conjugate() * a).real();
  return c + sigma_ * t * (L_ * corr);
}

double FlowOperator::horizontality_defect(const Vector& w) const {
  if (!gauge()) return 0.0;
  return (P_ * w).norm() / std::max(1.0, w.norm());
}

Vector FlowOperator::propagate(const Vector& w, double t) const {
  if (w.size() != dim()) throw Error(ErrorKind::DimensionMismatch, "state has wrong dimension");
  if (!gauge()) return apply_h(w, t);
  Vector kern = P_ * w;
  Vector y = C_.transpose() * (w - kern);
  return C_ * apply_h(y, t) + kern;
}

Vector FlowOperator::evolve(const Vector& w, double t) const {
  if (w.size() != dim()) throw Error(ErrorKind::DimensionMismatch, "state has wrong dimension");
  if (gauge()) {
    double d = horizontality_defect(w);
    if (d > 1e-9) throw Error(ErrorKind::NotHorizontal, "state has vertical part " + std::to_string(d));
  }
  return propagate(w, t);
}

Vector FlowOperator::pull_covector(const Vector& c, double t) const {
  if (c.size() != dim()) throw Error(ErrorKind::DimensionMismatch, "covector has wrong dimension");
  if (!gauge()) return apply_h_transpose(c, t);
  Vector h = C_ * apply_h_transpose(Vector(C_.transpose() * c), t);
  return h - P_.transpose() * h + P_.transpose() * c;
}

Matrix FlowOperator::propagator(double t) const {
  Matrix F(dim(), dim());
  for (Eigen::Index j = 0; j < dim(); ++j) F.col(j) = propagate(Vector::Unit(dim(), j), t);
  return F;
}

FlowOperator build_flow(const ConstraintChainResult& chain, const ConnectionProjector* projector,
                        const SliceModel* model, const FlowOptions& options) {
  FlowOperator f;
  f.omega_ = chain.omega_final;
  f.Q_ = chain.hamiltonian_final.Q();
  f.basis_ = chain.final_space.basis;
  f.win_begin_ = options.window_begin;
  f.win_end_ = options.window_end;
  if (chain.hamiltonian_final.b().norm() > 0.0)
    throw Error(ErrorKind::UnsupportedSpec, "flows are implemented for homogeneous quadratic Hamiltonians");
  const Eigen::Index k = f.omega_.rows();

  if (chain.classification == Classification::Gauge) {
    if (!projector) throw Error(ErrorKind::MissingProjector, "gauge classification needs a connection projector");
    if (projector->dim() != k) throw Error(ErrorKind::DimensionMismatch, "projector dimension differs from final space");
    f.P_ = projector->matrix();
    f.C_ = null_space(f.P_, 1e-8 * std::max(1.0, f.P_.norm()));
    if (f.C_.cols() + chain.kernel_final.dim() != k)
      throw Error(ErrorKind::KernelMismatch, "projector kernel is not complementary to ker omega");
  } else {
    f.C_ = Matrix::Identity(k, k);
  }
  Matrix Oh = f.C_.transpose() * f.omega_ * f.C_;
  f.Qh_ = f.C_.transpose() * f.Q_ * f.C_;
  f.Qh_ = 0.5 * (f.Qh_ + f.Qh_.transpose());
  Eigen::PartialPivLU<Matrix> olu(Matrix(Oh.transpose()));
  f.Jh_ = olu.solve(Matrix::Identity(Oh.rows(), Oh.cols()));

  bool want_leapfrog = options.mode == FlowMode::Leapfrog;
  if (!want_leapfrog) {
    std::string why;
    if (!f.build_spectral(&why)) {
      if (!model) throw Error(ErrorKind::NonDiagonalizable, why);
      f.warnings_.push_back("spectral flow unavailable (" + why + "); using leapfrog");
      want_leapfrog = true;
    }
  }
  if (want_leapfrog) {
    if (!model) throw Error(ErrorKind::InvalidArgument, "leapfrog needs the slice model for its canonical split");
    if (!(options.leapfrog_dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "leapfrog dt must be positive");
    f.mode_ = FlowMode::Leapfrog;
    f.lf_dt_ = options.leapfrog_dt;
    f.build_leapfrog(*model);
  }
  return f;
}

Vector evolve(const FlowOperator& flow, const Vector& state, double t) { return flow.evolve(state, t); }

std::string FieldPoint::display() const {
  if (!label.empty()) return label;
  std::ostringstream os;
  os << component;
  if (fiber) os << "[" << fiber << "]";
  if (!site.empty()) {
    os << "(";
    for (std::size_t i = 0; i < site.size(); ++i) os << (i ? "," : "") << site[i];
    os << ")";
  }
  os << "@" << t;
  return os.str();
}

CauchyLinear pullback_observable(const FieldPoint& obs, const FlowOperator& flow, const SliceModel& model,
                                 double sigma_time) {
  if (!flow.in_window(obs.t) || !flow.in_window(sigma_time))
    throw Error(ErrorKind::OutOfWindow, obs.display() + " or slice time outside the evolution window");
  if (flow.final_basis().rows() != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "flow and slice model disagree on the state dimension");
  Eigen::Index site = model.lattice().dims() == 0 && obs.site.empty() ? 0 : model.lattice().index(obs.site);
  Vector e = model.field_covector(obs.component, obs.fiber, site);
  Vector c = flow.final_basis().transpose() * e;
  return {flow.pull_covector(c, obs.t - sigma_time), obs.display()};
}

Vector hamiltonian_vector_field(const CauchyLinear& f, const FlatMap& flat) {
  if (f.coefficients.size() != flat.dim())
    throw Error(ErrorKind::DimensionMismatch, "observable has " + std::to_string(f.coefficients.size()) +
                                                  " coefficients, final space has " + std::to_string(flat.dim()));
  try {
    return flat.solve(f.coefficients);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InconsistentCovector)
      throw Error(ErrorKind::GaugeVariantObservable, f.label + " does not annihilate the gauge directions");
    throw;
  }
}

Vector hamiltonian_vector_field(const CauchyLinear& f, const ConstraintChainResult& chain,
                                const ConnectionProjector* projector) {
  FlatMap flat(chain.omega_final, projector ? &projector->matrix() : nullptr, chain.rank_rtol);
  return hamiltonian_vector_field(f, flat);
}

double bracket(const CauchyLinear& f, const CauchyLinear& g, const FlatMap& flat) {
  Vector xf = hamiltonian_vector_field(f, flat);
  hamiltonian_vector_field(g, flat);  // admissibility of g
  return g.coefficients.dot(xf);
}

double bracket(const CauchyLinear& f, const CauchyLinear& g, const ConstraintChainResult& chain,
               const ConnectionProjector* projector) {
  FlatMap flat(chain.omega_final, projector ? &projector->matrix() : nullptr, chain.rank_rtol);
  return bracket(f, g, flat);
}

double bracket_spacetime_tangent_lift(const FieldPoint& F, const FieldPoint& G, const FlowOperator& flow,
                                      const SliceModel& model, double sigma_time, const FlatMap& flat) {
  CauchyLinear f = pullback_observable(F, flow, model, sigma_time);
  CauchyLinear g0 = pullback_observable(G, flow, model, G.t);  // G at its own time, no transport
  Vector xf = hamiltonian_vector_field(f, flat);
  Vector x_at_g = flow.propagate(xf, G.t - sigma_time);
  hamiltonian_vector_field(g0, flat);
  return g0.coefficients.dot(x_at_g);
}

double bracket_spacetime(const FieldPoint& F, const FieldPoint& G, const FlowOperator& flow, const SliceModel& model,
                         double sigma_time, const FlatMap& flat) {
  CauchyLinear f = pullback_observable(F, flow, model, sigma_time);
  CauchyLinear g = pullback_observable(G, flow, model, sigma_time);
  double v = bracket(f, g, flat);
#ifndef NDEBUG
  double w = bracket_spacetime_tangent_lift(F, G, flow, model, sigma_time, flat);
  if (std::abs(v - w) > 1e-10 * std::max(1.0, std::abs(v)))
    throw Error(ErrorKind::InvalidArgument, "pullback and tangent-lift brackets disagree");
#endif
  return v;
}

std::vector<BracketRow> bracket_batch(const std::vector<BracketPair>& pairs, const FlowOperator& flow,
                                      const SliceModel& model, double sigma_time, const FlatMap& flat,
                                      unsigned threads) {
  std::vector<BracketRow> rows(pairs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      BracketRow& row = rows[i];
      row.id = i;
      row.f_label = pairs[i].F.display();
      row.g_label = pairs[i].G.display();
      try {
        row.value = bracket_spacetime(pairs[i].F, pairs[i].G, flow, model, sigma_time, flat);
      } catch (const Error& e) {
        row.value = std::nan("");
        row.error = to_string(e.kind());
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, pairs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return rows;
}

std::string brackets_to_csv(const std::vector<BracketRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "pair_id,f_label,g_label,value,error\n";
  for (const auto& r : rows) {
    os << r.id << ",\"" << r.f_label << "\",\"" << r.g_label << "\",";
    if (!r.error) os << r.value;
    os << "," << r.error.value_or("") << "\n";
  }
  return os.str();
}

nlohmann::json brackets_to_json(const std::vector<BracketRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"pair_id", r.id}, {"f_label", r.f_label}, {"g_label", r.g_label}};
    if (r.error) {
      j["value"] = nullptr;
      j["error"] = *r.error;
    } else {
      j["value"] = r.value;
    }
    out.push_back(j);
  }
  return out;
}

}  // namespace covphase
