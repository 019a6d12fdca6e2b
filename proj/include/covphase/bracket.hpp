#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "covphase/gauge.hpp"
#include "covphase/presymplectic.hpp"
#include "covphase/slicing.hpp"

namespace covphase {

enum class FlowMode { Spectral, Leapfrog };
const char* to_string(FlowMode m);

struct FlowOptions {
  FlowMode mode = FlowMode::Spectral;
  double leapfrog_dt = 1e-2;
  double window_begin = -std::numeric_limits<double>::infinity();
  double window_end = std::numeric_limits<double>::infinity();
};

// Linear flow of Omega^T w' = Q w on final-space coordinates. In the gauge case
// the dynamics runs on the horizontal subspace ker P and kernel components are
// carried along unchanged: F(t) = C F_h(t) C^T (I - P) + P.
class FlowOperator {
 public:
  Eigen::Index dim() const { return omega_.rows(); }
  FlowMode mode() const { return mode_; }
  bool gauge() const { return P_.size() > 0; }
  const Matrix& omega() const { return omega_; }
  const Matrix& hamiltonian() const { return Q_; }
  const Matrix& final_basis() const { return basis_; }
  const Matrix& projector() const { return P_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  double leapfrog_dt() const { return lf_dt_; }
  bool in_window(double t) const { return t >= win_begin_ && t <= win_end_; }
  double window_begin() const { return win_begin_; }
  double window_end() const { return win_end_; }

  Vector evolve(const Vector& w, double t) const;  // NotHorizontal in the gauge case
  Vector propagate(const Vector& w, double t) const;  // no horizontality check
  Vector pull_covector(const Vector& c, double t) const;  // F(t)^T c
  Matrix propagator(double t) const;
  double energy(const Vector& w) const { return 0.5 * w.dot(Q_ * w); }
  double horizontality_defect(const Vector& w) const;
  // |eigenvalues| of the generator; each oscillation frequency appears twice
  Vector frequencies() const { return freqs_; }

  friend FlowOperator build_flow(const ConstraintChainResult&, const ConnectionProjector*, const SliceModel*,
                                 const FlowOptions&);

 private:
  Vector apply_h(const Vector& y, double t) const;
  Vector apply_h_transpose(const Vector& c, double t) const;
  bool build_spectral(std::string* why);
  void build_leapfrog(const SliceModel& model);
  void leapfrog_steps(Eigen::Ref<Vector> x, Eigen::Ref<Vector> p, double t, bool transpose) const;

  FlowMode mode_ = FlowMode::Spectral;
  Matrix omega_, Q_, basis_, P_;
  Matrix C_;   // orthonormal horizontal basis
  Matrix Qh_;  // horizontal Hamiltonian
  Matrix Jh_;  // (Omega_h^T)^{-1}
  double win_begin_ = 0, win_end_ = 0;
  std::vector<std::string> warnings_;
  // spectral data
  double sigma_ = 1.0;
  Matrix L_, JL_;
  Eigen::MatrixXcd V_;
  Vector mu_, freqs_;
  // leapfrog data
  double lf_dt_ = 0;
  Matrix T_;  // y = T (x; p)
  Eigen::PartialPivLU<Matrix> T_lu_;
  Matrix Dx_, Dp_;
  Eigen::Index nq_ = 0;
};

FlowOperator build_flow(const ConstraintChainResult& chain, const ConnectionProjector* projector = nullptr,
                        const SliceModel* model = nullptr, const FlowOptions& options = {});

Vector evolve(const FlowOperator& flow, const Vector& state, double t);

struct FieldPoint {
  std::string component;
  std::vector<int> site;
  double t = 0.0;
  int fiber = 0;
  std::string label;  // defaults to component(site)@t
  std::string display() const;
};

struct CauchyLinear {
  Vector coefficients;  // on final-space coordinates
  std::string label;
};

CauchyLinear pullback_observable(const FieldPoint& obs, const FlowOperator& flow, const SliceModel& model,
                                 double sigma_time);

Vector hamiltonian_vector_field(const CauchyLinear& f, const FlatMap& flat);
Vector hamiltonian_vector_field(const CauchyLinear& f, const ConstraintChainResult& chain,
                                const ConnectionProjector* projector = nullptr);

// {g, f} = g . X_f
double bracket(const CauchyLinear& f, const CauchyLinear& g, const FlatMap& flat);
double bracket(const CauchyLinear& f, const CauchyLinear& g, const ConstraintChainResult& chain,
               const ConnectionProjector* projector = nullptr);

// {G, F} through pullback to the slice at sigma_time.
double bracket_spacetime(const FieldPoint& F, const FieldPoint& G, const FlowOperator& flow, const SliceModel& model,
                         double sigma_time, const FlatMap& flat);
// Same bracket by transporting X_f with the tangent-lift flow and evaluating G on it.
double bracket_spacetime_tangent_lift(const FieldPoint& F, const FieldPoint& G, const FlowOperator& flow,
                                      const SliceModel& model, double sigma_time, const FlatMap& flat);

struct BracketPair {
  FieldPoint F;
  FieldPoint G;
};

struct BracketRow {
  std::size_t id = 0;
  std::string f_label;
  std::string g_label;
  double value = 0.0;
  std::optional<std::string> error;
};

// Evaluates independent pairs concurrently; rows come back in input order.
std::vector<BracketRow> bracket_batch(const std::vector<BracketPair>& pairs, const FlowOperator& flow,
                                      const SliceModel& model, double sigma_time, const FlatMap& flat,
                                      unsigned threads = 0);

std::string brackets_to_csv(const std::vector<BracketRow>& rows);
nlohmann::json brackets_to_json(const std::vector<BracketRow>& rows);

}  // namespace covphase
