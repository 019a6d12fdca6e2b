#include "covphase/ddw.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "covphase/error.hpp"

namespace covphase {

static_assert(std::endian::native == std::endian::little, "binary section format assumes a little-endian host");

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::FreeParticle: return "free_particle";
    case ModelKind::VectorBoson: return "vector_boson";
    case ModelKind::Electrodynamics: return "electrodynamics";
  }
  return "unknown";
}

FieldTheorySpec FieldTheorySpec::free_particle(double mass) {
  if (!(mass > 0.0)) throw Error(ErrorKind::UnsupportedSpec, "free particle mass must be positive");
  return FieldTheorySpec(ModelKind::FreeParticle, mass, 1, 1, MomentaShape::Plain);
}

FieldTheorySpec FieldTheorySpec::vector_boson(double mass, int r, int spatial_dims) {
  if (!(mass >= 0.0)) throw Error(ErrorKind::UnsupportedSpec, "vector boson mass must be non-negative");
  if (r < 1) throw Error(ErrorKind::UnsupportedSpec, "fiber dimension must be >= 1");
  if (spatial_dims < 1) throw Error(ErrorKind::UnsupportedSpec, "vector boson needs d >= 1");
  return FieldTheorySpec(ModelKind::VectorBoson, mass, spatial_dims + 1, r, MomentaShape::Plain);
}

FieldTheorySpec FieldTheorySpec::electrodynamics() {
  return FieldTheorySpec(ModelKind::Electrodynamics, 0.0, 4, 4, MomentaShape::Antisymmetric2);
}

int FieldTheorySpec::momenta_components() const {
  return shape_ == MomentaShape::Plain ? n_ * r_ : n_ * (n_ - 1) / 2;
}

int FieldTheorySpec::pair_index(int mu, int nu) const {
  if (!(0 <= mu && mu < nu && nu < n_)) throw Error(ErrorKind::IndexOutOfRange, "pair index needs mu < nu < n");
  // rows mu = 0..n-2 hold n-1-mu entries each
  return mu * (2 * n_ - mu - 1) / 2 + (nu - mu - 1);
}

double FieldTheorySpec::density(const double*, const double* u, const double* rho) const {
  switch (kind_) {
    case ModelKind::FreeParticle:
      return rho[0] * rho[0] / (2.0 * mass_);
    case ModelKind::VectorBoson: {
      double s = 0.0;
      for (int mu = 0; mu < n_; ++mu)
        for (int a = 0; a < r_; ++a) s += eta(mu) * rho[mu * r_ + a] * rho[mu * r_ + a];
      for (int a = 0; a < r_; ++a) s += mass_ * mass_ * u[a] * u[a];
      return 0.5 * s;
    }
    case ModelKind::Electrodynamics: {
      double s = 0.0;
      for (int mu = 0; mu < n_; ++mu)
        for (int nu = mu + 1; nu < n_; ++nu) {
          double v = rho[pair_index(mu, nu)];
          s += eta(mu) * eta(nu) * v * v;
        }
      return -0.5 * s;
    }
  }
  return 0.0;
}

void FieldTheorySpec::density_du(const double*, const double* u, const double*, double* out) const {
  for (int a = 0; a < r_; ++a) out[a] = kind_ == ModelKind::VectorBoson ? mass_ * mass_ * u[a] : 0.0;
}

void FieldTheorySpec::density_drho(const double*, const double*, const double* rho, double* out) const {
  switch (kind_) {
    case ModelKind::FreeParticle:
      out[0] = rho[0] / mass_;
      break;
    case ModelKind::VectorBoson:
      for (int mu = 0; mu < n_; ++mu)
        for (int a = 0; a < r_; ++a) out[mu * r_ + a] = eta(mu) * rho[mu * r_ + a];
      break;
    case ModelKind::Electrodynamics:
      for (int mu = 0; mu < n_; ++mu)
        for (int nu = mu + 1; nu < n_; ++nu) {
          int p = pair_index(mu, nu);
          out[p] = -eta(mu) * eta(nu) * rho[p];
        }
      break;
  }
}

DiscretizedSection DiscretizedSection::zeros(const FieldTheorySpec& spec, const SpacetimeLattice& lat) {
  DiscretizedSection s;
  s.time_steps = lat.time_steps;
  s.sites = lat.space.sites();
  s.fiber = spec.fiber_dim();
  s.momenta_components = spec.momenta_components();
  s.phi.assign(static_cast<std::size_t>(s.time_steps * s.sites * s.fiber), 0.0);
  s.momenta.assign(static_cast<std::size_t>(s.time_steps * s.sites * s.momenta_components), 0.0);
  return s;
}

double DiscretizedSection::antisym_at(const FieldTheorySpec& spec, int t, Eigen::Index s, int mu, int nu) const {
  if (mu == nu) return 0.0;
  if (mu < nu) return mom_at(t, s, spec.pair_index(mu, nu));
  return -mom_at(t, s, spec.pair_index(nu, mu));
}

void check_section(const FieldTheorySpec& spec, const SpacetimeLattice& lat, const DiscretizedSection& sec) {
  if (spec.spatial_dims() != lat.space.dims())
    throw Error(ErrorKind::ShapeMismatch, "lattice has " + std::to_string(lat.space.dims()) +
                                              " spatial axes, model expects " + std::to_string(spec.spatial_dims()));
  if (sec.time_steps != lat.time_steps || sec.sites != lat.space.sites() || sec.fiber != spec.fiber_dim() ||
      sec.momenta_components != spec.momenta_components())
    throw Error(ErrorKind::ShapeMismatch, "section dimensions do not match model and lattice");
  if (sec.phi.size() != static_cast<std::size_t>(sec.time_steps * sec.sites * sec.fiber) ||
      sec.momenta.size() != static_cast<std::size_t>(sec.time_steps * sec.sites * sec.momenta_components))
    throw Error(ErrorKind::ShapeMismatch, "section payload length does not match its header");
}

namespace {

// Discrete derivatives on a section. Time: centered inside, one-sided at the ends.
// Space: forward differences for field gradients, backward for momentum divergences.
struct Stencil {
  const SpacetimeLattice& lat;

  template <class Get>
  double dt(Get get, int t) const {
    const int nt = lat.time_steps;
    if (t == 0) return (get(1) - get(0)) / lat.dt;
    if (t == nt - 1) return (get(nt - 1) - get(nt - 2)) / lat.dt;
    return (get(t + 1) - get(t - 1)) / (2.0 * lat.dt);
  }
  template <class Get>
  double fwd(Get get, Eigen::Index s, int j) const {
    return (get(lat.space.neighbor(s, j, 1)) - get(s)) / lat.space.spacing()[j];
  }
  template <class Get>
  double bwd(Get get, Eigen::Index s, int j) const {
    return (get(s) - get(lat.space.neighbor(s, j, -1))) / lat.space.spacing()[j];
  }
  double weight(int t) const {
    return (t == 0 || t == lat.time_steps - 1) ? 0.5 * lat.dt : lat.dt;
  }
};

std::vector<double> point(const SpacetimeLattice& lat, int t, Eigen::Index s) {
  std::vector<double> x{lat.time(t)};
  if (lat.space.dims() > 0) {
    auto c = lat.space.coords(s);
    for (int j = 0; j < lat.space.dims(); ++j) x.push_back(c[j] * lat.space.spacing()[j]);
  }
  return x;
}

// d_mu phi^a at (t, s); mu = 0 is time
double field_derivative(const Stencil& st, const DiscretizedSection& sec, int t, Eigen::Index s, int mu, int a) {
  if (mu == 0) return st.dt([&](int tt) { return sec.phi_at(tt, s, a); }, t);
  return st.fwd([&](Eigen::Index ss) { return sec.phi_at(t, ss, a); }, s, mu - 1);
}

}  // namespace

double DdwResidual::max_phi() const {
  double m = 0.0;
  const std::size_t per_t = static_cast<std::size_t>(sites * phi_components);
  for (int t = 1; t + 1 < time_steps; ++t)
    for (std::size_t i = 0; i < per_t; ++i) m = std::max(m, std::abs(res_phi[t * per_t + i]));
  return m;
}

double DdwResidual::max_mom() const {
  double m = 0.0;
  const std::size_t per_t = static_cast<std::size_t>(sites * mom_components);
  for (int t = 1; t + 1 < time_steps; ++t)
    for (std::size_t i = 0; i < per_t; ++i) m = std::max(m, std::abs(res_mom[t * per_t + i]));
  return m;
}

double DdwResidual::max_interior() const { return std::max(max_phi(), max_mom()); }

DdwResidual ddw_residual(const FieldTheorySpec& spec, const SpacetimeLattice& lat, const DiscretizedSection& sec) {
  check_section(spec, lat, sec);
  const Stencil st{lat};
  const int n = spec.base_dim();
  const int r = spec.fiber_dim();
  const int nc = spec.momenta_components();
  const bool anti = spec.momenta_shape() == MomentaShape::Antisymmetric2;

  DdwResidual res;
  res.time_steps = sec.time_steps;
  res.sites = sec.sites;
  res.phi_components = anti ? nc : n * r;
  res.mom_components = r;
  res.res_phi.assign(static_cast<std::size_t>(res.time_steps * res.sites * res.phi_components), 0.0);
  res.res_mom.assign(static_cast<std::size_t>(res.time_steps * res.sites * res.mom_components), 0.0);

  std::vector<double> dHdrho(nc), dHdu(r);
  for (int t = 0; t < sec.time_steps; ++t) {
    for (Eigen::Index s = 0; s < sec.sites; ++s) {
      auto x = point(lat, t, s);
      const double* u = &sec.phi[(t * sec.sites + s) * r];
      const double* rho = &sec.momenta[(t * sec.sites + s) * nc];
      spec.density_drho(x.data(), u, rho, dHdrho.data());
      spec.density_du(x.data(), u, rho, dHdu.data());
      double* rp = &res.res_phi[(t * sec.sites + s) * res.phi_components];
      double* rm = &res.res_mom[(t * sec.sites + s) * res.mom_components];

      if (!anti) {
        for (int mu = 0; mu < n; ++mu)
          for (int a = 0; a < r; ++a) rp[mu * r + a] = field_derivative(st, sec, t, s, mu, a) - dHdrho[mu * r + a];
        for (int a = 0; a < r; ++a) {
          double div = st.dt([&](int tt) { return sec.mom_at(tt, s, a); }, t);
          for (int j = 0; j < n - 1; ++j)
            div += st.bwd([&](Eigen::Index ss) { return sec.mom_at(t, ss, (j + 1) * r + a); }, s, j);
          rm[a] = div + dHdu[a];
        }
      } else {
        for (int mu = 0; mu < n; ++mu)
          for (int nu = mu + 1; nu < n; ++nu) {
            double f = field_derivative(st, sec, t, s, mu, nu) - field_derivative(st, sec, t, s, nu, mu);
            int p = spec.pair_index(mu, nu);
            rp[p] = f - dHdrho[p];
          }
        for (int nu = 0; nu < n; ++nu) {
          double div = st.dt([&](int tt) { return sec.antisym_at(spec, tt, s, 0, nu); }, t);
          for (int j = 0; j < n - 1; ++j)
            div += st.bwd([&](Eigen::Index ss) { return sec.antisym_at(spec, t, ss, j + 1, nu); }, s, j);
          rm[nu] = div + dHdu[nu];
        }
      }
    }
  }
  return res;
}

double evaluate_action(const FieldTheorySpec& spec, const SpacetimeLattice& lat, const DiscretizedSection& sec) {
  check_section(spec, lat, sec);
  const Stencil st{lat};
  const int n = spec.base_dim();
  const int r = spec.fiber_dim();
  const int nc = spec.momenta_components();
  const bool anti = spec.momenta_shape() == MomentaShape::Antisymmetric2;
  const double vol = lat.space.cell_volume();

  double total = 0.0;
  for (int t = 0; t < sec.time_steps; ++t) {
    double slice = 0.0;
    for (Eigen::Index s = 0; s < sec.sites; ++s) {
      auto x = point(lat, t, s);
      const double* u = &sec.phi[(t * sec.sites + s) * r];
      const double* rho = &sec.momenta[(t * sec.sites + s) * nc];
      double pairing = 0.0;
      if (!anti) {
        for (int mu = 0; mu < n; ++mu)
          for (int a = 0; a < r; ++a) pairing += rho[mu * r + a] * field_derivative(st, sec, t, s, mu, a);
      } else {
        // sum over all mu, nu of P^{mu nu} d_mu A_nu = sum over mu < nu of P^{mu nu} F_{mu nu}
        for (int mu = 0; mu < n; ++mu)
          for (int nu = mu + 1; nu < n; ++nu) {
            double f = field_derivative(st, sec, t, s, mu, nu) - field_derivative(st, sec, t, s, nu, mu);
            pairing += rho[spec.pair_index(mu, nu)] * f;
          }
      }
      slice += pairing - spec.density(x.data(), u, rho);
    }
    total += st.weight(t) * vol * slice;
  }
  return total;
}

nlohmann::json section_to_json(const DiscretizedSection& sec) {
  return {{"time_steps", sec.time_steps},
          {"sites", sec.sites},
          {"fiber", sec.fiber},
          {"momenta_components", sec.momenta_components},
          {"phi", sec.phi},
          {"momenta", sec.momenta}};
}

DiscretizedSection section_from_json(const nlohmann::json& j) {
  DiscretizedSection s;
  s.time_steps = j.at("time_steps").get<int>();
  s.sites = j.at("sites").get<Eigen::Index>();
  s.fiber = j.at("fiber").get<int>();
  s.momenta_components = j.at("momenta_components").get<int>();
  s.phi = j.at("phi").get<std::vector<double>>();
  s.momenta = j.at("momenta").get<std::vector<double>>();
  if (s.phi.size() != static_cast<std::size_t>(s.time_steps * s.sites * s.fiber) ||
      s.momenta.size() != static_cast<std::size_t>(s.time_steps * s.sites * s.momenta_components))
    throw Error(ErrorKind::ShapeMismatch, "section json payload does not match its dims");
  return s;
}

namespace {
constexpr char kMagic[8] = {'C', 'P', 'S', 'E', 'C', 'T', '0', '1'};
constexpr std::uint64_t kDtypeF64 = 1;

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error(ErrorKind::Io, "truncated section header");
  return v;
}
}  // namespace

void write_section_binary(std::ostream& os, const DiscretizedSection& sec) {
  os.write(kMagic, sizeof kMagic);
  put_u64(os, static_cast<std::uint64_t>(sec.time_steps));
  put_u64(os, static_cast<std::uint64_t>(sec.sites));
  put_u64(os, static_cast<std::uint64_t>(sec.fiber));
  put_u64(os, static_cast<std::uint64_t>(sec.momenta_components));
  put_u64(os, kDtypeF64);
  os.write(reinterpret_cast<const char*>(sec.phi.data()), static_cast<std::streamsize>(sec.phi.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(sec.momenta.data()),
           static_cast<std::streamsize>(sec.momenta.size() * sizeof(double)));
  if (!os) throw Error(ErrorKind::Io, "failed writing section");
}

DiscretizedSection read_section_binary(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(ErrorKind::Io, "not a section file");
  DiscretizedSection s;
  s.time_steps = static_cast<int>(get_u64(is));
  s.sites = static_cast<Eigen::Index>(get_u64(is));
  s.fiber = static_cast<int>(get_u64(is));
  s.momenta_components = static_cast<int>(get_u64(is));
  if (get_u64(is) != kDtypeF64) throw Error(ErrorKind::Io, "unsupported dtype in section file");
  s.phi.resize(static_cast<std::size_t>(s.time_steps * s.sites * s.fiber));
  s.momenta.resize(static_cast<std::size_t>(s.time_steps * s.sites * s.momenta_components));
  is.read(reinterpret_cast<char*>(s.phi.data()), static_cast<std::streamsize>(s.phi.size() * sizeof(double)));
  is.read(reinterpret_cast<char*>(s.momenta.data()), static_cast<std::streamsize>(s.momenta.size() * sizeof(double)));
  if (!is) throw Error(ErrorKind::Io, "truncated section payload");
  return s;
}

}  // namespace covphase
