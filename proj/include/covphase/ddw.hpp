#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "covphase/lattice.hpp"

namespace covphase {

enum class ModelKind { FreeParticle, VectorBoson, Electrodynamics };
enum class MomentaShape { Plain, Antisymmetric2 };

const char* to_string(ModelKind k);

// Covariant model with closed-form Hamiltonian density H(x, u, rho).
// Plain momenta are stored as rho[mu * r + a]; antisymmetric momenta as the
// upper triangle rho[pair_index(mu, nu)], mu < nu, in row order.
class FieldTheorySpec {
 public:
  static FieldTheorySpec free_particle(double mass);
  static FieldTheorySpec vector_boson(double mass, int r, int spatial_dims);
  static FieldTheorySpec electrodynamics();

  ModelKind kind() const { return kind_; }
  double mass() const { return mass_; }
  int base_dim() const { return n_; }
  int spatial_dims() const { return n_ - 1; }
  int fiber_dim() const { return r_; }
  MomentaShape momenta_shape() const { return shape_; }
  int momenta_components() const;
  static double eta(int mu) { return mu == 0 ? 1.0 : -1.0; }
  int pair_index(int mu, int nu) const;

  double density(const double* x, const double* u, const double* rho) const;
  void density_du(const double* x, const double* u, const double* rho, double* out) const;
  void density_drho(const double* x, const double* u, const double* rho, double* out) const;

  std::string name() const { return to_string(kind_); }
  bool operator==(const FieldTheorySpec& o) const {
    return kind_ == o.kind_ && mass_ == o.mass_ && n_ == o.n_ && r_ == o.r_;
  }

 private:
  FieldTheorySpec(ModelKind k, double m, int n, int r, MomentaShape s) : kind_(k), mass_(m), n_(n), r_(r), shape_(s) {}
  ModelKind kind_;
  double mass_;
  int n_;
  int r_;
  MomentaShape shape_;
};

struct DiscretizedSection {
  int time_steps = 0;
  Eigen::Index sites = 0;
  int fiber = 0;
  int momenta_components = 0;
  std::vector<double> phi;      // [t][site][a]
  std::vector<double> momenta;  // [t][site][c]

  static DiscretizedSection zeros(const FieldTheorySpec& spec, const SpacetimeLattice& lat);
  double& phi_at(int t, Eigen::Index s, int a) { return phi[(t * sites + s) * fiber + a]; }
  double phi_at(int t, Eigen::Index s, int a) const { return phi[(t * sites + s) * fiber + a]; }
  double& mom_at(int t, Eigen::Index s, int c) { return momenta[(t * sites + s) * momenta_components + c]; }
  double mom_at(int t, Eigen::Index s, int c) const { return momenta[(t * sites + s) * momenta_components + c]; }
  // full antisymmetric P^{mu nu} expanded from the stored upper triangle
  double antisym_at(const FieldTheorySpec& spec, int t, Eigen::Index s, int mu, int nu) const;
  bool operator==(const DiscretizedSection& o) const = default;
};

struct DdwResidual {
  int time_steps = 0;
  Eigen::Index sites = 0;
  int phi_components = 0;
  int mom_components = 0;
  std::vector<double> res_phi;  // [t][site][component]
  std::vector<double> res_mom;
  // max |.| over interior times 1 .. N_t-2
  double max_phi() const;
  double max_mom() const;
  double max_interior() const;
};

void check_section(const FieldTheorySpec& spec, const SpacetimeLattice& lat, const DiscretizedSection& sec);

DdwResidual ddw_residual(const FieldTheorySpec& spec, const SpacetimeLattice& lat, const DiscretizedSection& sec);
double evaluate_action(const FieldTheorySpec& spec, const SpacetimeLattice& lat, const DiscretizedSection& sec);

nlohmann::json section_to_json(const DiscretizedSection& sec);
DiscretizedSection section_from_json(const nlohmann::json& j);
void write_section_binary(std::ostream& os, const DiscretizedSection& sec);
DiscretizedSection read_section_binary(std::istream& is);

}  // namespace covphase
