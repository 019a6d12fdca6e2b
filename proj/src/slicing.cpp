#include "covphase/slicing.hpp"

#include <algorithm>

#include "covphase/error.hpp"
#include "covphase/gauge.hpp"

namespace covphase {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// adds the block scale * D at (row0, col0) and its transpose at (col0, row0)
void add_coupling(Triplets& t, Eigen::Index row0, Eigen::Index col0, const SparseMatrix& D, double scale) {
  for (int k = 0; k < D.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(D, k); it; ++it) {
      t.emplace_back(row0 + it.row(), col0 + it.col(), scale * it.value());
      t.emplace_back(col0 + it.col(), row0 + it.row(), scale * it.value());
    }
}

void add_diagonal(Triplets& t, Eigen::Index off, Eigen::Index n, double v) {
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(off + i, off + i, v);
}

Matrix dense(Eigen::Index n, const Triplets& t) {
  SparseMatrix S(n, n);
  S.setFromTriplets(t.begin(), t.end());
  return Matrix(S);
}

// spatial index pairs (j, k), j < k, in storage order of the beta block
const std::vector<std::pair<int, int>>& spatial_pairs() {
  static const std::vector<std::pair<int, int>> p{{1, 2}, {1, 3}, {2, 3}};
  return p;
}

}  // namespace

SliceModel::SliceModel(FieldTheorySpec spec, SpatialLattice lattice)
    : spec_(std::move(spec)), lattice_(std::move(lattice)) {
  const int d = lattice_.dims();
  if (spec_.spatial_dims() != d && !(spec_.kind() == ModelKind::FreeParticle && d == 0))
    throw Error(ErrorKind::UnsupportedSpec, std::string(spec_.name()) + " expects " +
                                                std::to_string(spec_.spatial_dims()) + " spatial axes, lattice has " +
                                                std::to_string(d));
  const Eigen::Index N = lattice_.sites();
  const double vol = lattice_.cell_volume();
  Triplets w, q;
  std::vector<std::string> labels;
  auto label_block = [&](const std::string& name, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) labels.push_back(name + "[" + std::to_string(i) + "]");
  };

  switch (spec_.kind()) {
    case ModelKind::FreeParticle: {
      blocks_ = {{"q", 0, 1}, {"p", 1, 1}};
      position_ = "q";
      momentum_ = "p";
      w.emplace_back(0, 1, 1.0);
      w.emplace_back(1, 0, -1.0);
      q.emplace_back(1, 1, 1.0 / spec_.mass());
      break;
    }
    case ModelKind::VectorBoson: {
      const int r = spec_.fiber_dim();
      const Eigen::Index nf = r * N;
      blocks_ = {{"phi", 0, nf}, {"p", nf, nf}, {"beta", 2 * nf, d * nf}};
      position_ = "phi";
      momentum_ = "p";
      for (Eigen::Index i = 0; i < nf; ++i) {
        w.emplace_back(i, nf + i, vol);
        w.emplace_back(nf + i, i, -vol);
      }
      // H = vol * sum[ beta.D+phi + 1/2 beta^2 - 1/2 p^2 - 1/2 m^2 phi^2 ]
      add_diagonal(q, 0, nf, -spec_.mass() * spec_.mass() * vol);
      add_diagonal(q, nf, nf, -vol);
      add_diagonal(q, 2 * nf, d * nf, vol);
      for (int j = 0; j < d; ++j) {
        SparseMatrix D = lattice_.forward_difference(j);
        for (int a = 0; a < r; ++a) add_coupling(q, 2 * nf + (j * r + a) * N, a * N, D, vol);
      }
      break;
    }
    case ModelKind::Electrodynamics: {
      if (d != 3) throw Error(ErrorKind::UnsupportedSpec, "electrodynamics needs three spatial axes");
      blocks_ = {{"a", 0, 3 * N}, {"p", 3 * N, 3 * N}, {"beta", 6 * N, 3 * N}, {"a0", 9 * N, N}};
      position_ = "a";
      momentum_ = "p";
      inert_ = {"a0"};
      for (Eigen::Index i = 0; i < 3 * N; ++i) {
        w.emplace_back(i, 3 * N + i, vol);
        w.emplace_back(3 * N + i, i, -vol);
      }
      // H = vol * sum[ p^k D+_k a0 + 1/2 p^2 - beta^{jk} (D+_j a_k - D+_k a_j) - 1/2 beta^2 ], j < k
      add_diagonal(q, 3 * N, 3 * N, vol);
      add_diagonal(q, 6 * N, 3 * N, -vol);
      for (int k = 0; k < 3; ++k) add_coupling(q, 3 * N + k * N, 9 * N, lattice_.forward_difference(k), vol);
      const auto& pairs = spatial_pairs();
      for (std::size_t c = 0; c < pairs.size(); ++c) {
        const int j = pairs[c].first - 1, k = pairs[c].second - 1;
        const Eigen::Index row = 6 * N + static_cast<Eigen::Index>(c) * N;
        add_coupling(q, row, k * N, lattice_.forward_difference(j), -vol);
        add_coupling(q, row, j * N, lattice_.forward_difference(k), vol);
      }
      break;
    }
  }

  for (const auto& b : blocks_) label_block(b.name, b.size);
  const Eigen::Index n = blocks_.back().offset + blocks_.back().size;
  Matrix Qd = dense(n, q);
  system_ = PresymplecticSystem(dense(n, w), QuadraticHamiltonian::homogeneous(Qd), labels);
  if (spec_.kind() == ModelKind::Electrodynamics)
    longitudinal_ = std::make_shared<const LongitudinalProjector>(lattice_);
}

const StateBlock& SliceModel::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw Error(ErrorKind::IndexOutOfRange, "no state block named " + name);
}

bool SliceModel::has_block(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const StateBlock& b) { return b.name == name; });
}

const LongitudinalProjector& SliceModel::longitudinal() const {
  if (!longitudinal_) throw Error(ErrorKind::UnsupportedSpec, "model has no vector-potential block");
  return *longitudinal_;
}

std::vector<std::string> SliceModel::components() const {
  switch (spec_.kind()) {
    case ModelKind::FreeParticle: return {"q", "p"};
    case ModelKind::VectorBoson: {
      std::vector<std::string> c{"phi"};
      for (int mu = 0; mu <= lattice_.dims(); ++mu) c.push_back("P" + std::to_string(mu));
      return c;
    }
    case ModelKind::Electrodynamics:
      return {"A0", "A1", "A2", "A3", "AT1", "AT2", "AT3", "AL1", "AL2", "AL3",
              "P01", "P02", "P03", "P12", "P13", "P23"};
  }
  return {};
}

bool SliceModel::gauge_variant(const std::string& c) const {
  return spec_.kind() == ModelKind::Electrodynamics && (c == "A0" || c == "A1" || c == "A2" || c == "A3" ||
                                                        c.rfind("AL", 0) == 0);
}

Vector SliceModel::field_covector(const std::string& comp, int fiber, Eigen::Index site) const {
  const Eigen::Index N = lattice_.sites();
  if (site < 0 || site >= N) throw Error(ErrorKind::IndexOutOfRange, "site " + std::to_string(site) + " out of range");
  if (fiber < 0 || fiber >= (spec_.kind() == ModelKind::VectorBoson ? spec_.fiber_dim() : 1))
    throw Error(ErrorKind::IndexOutOfRange, "fiber index out of range");
  Vector e = Vector::Zero(dim());
  auto bad = [&]() { return Error(ErrorKind::IndexOutOfRange, "unknown component " + comp + " for " + spec_.name()); };

  switch (spec_.kind()) {
    case ModelKind::FreeParticle:
      if (comp == "q" || comp == "phi")
        e(0) = 1.0;
      else if (comp == "p" || comp == "P0")
        e(1) = 1.0;
      else
        throw bad();
      return e;
    case ModelKind::VectorBoson: {
      const int r = spec_.fiber_dim();
      if (comp == "phi") {
        e(block("phi").offset + fiber * N + site) = 1.0;
      } else if (comp.size() >= 2 && comp[0] == 'P') {
        int mu = -1;
        try {
          mu = std::stoi(comp.substr(1));
        } catch (...) {
          throw bad();
        }
        if (mu == 0)
          e(block("p").offset + fiber * N + site) = -1.0;  // p = -P^0 on the slice
        else if (mu >= 1 && mu <= lattice_.dims())
          e(block("beta").offset + ((mu - 1) * r + fiber) * N + site) = 1.0;
        else
          throw bad();
      } else {
        throw bad();
      }
      return e;
    }
    case ModelKind::Electrodynamics: {
      if (comp.size() == 2 && comp[0] == 'A') {
        int mu = comp[1] - '0';
        if (mu == 0) return e;  // a0 is pinned to zero
        if (mu < 1 || mu > 3) throw bad();
        e(block("a").offset + (mu - 1) * N + site) = 1.0;
        return e;
      }
      if (comp.size() == 3 && comp[0] == 'A' && (comp[1] == 'T' || comp[1] == 'L')) {
        int k = comp[2] - '1';
        if (k < 0 || k > 2) throw bad();
        Vector unit = Vector::Zero(3 * N);
        unit(k * N + site) = 1.0;
        Vector lon = longitudinal().apply(unit);  // symmetric operator, so this is its row
        e.segment(block("a").offset, 3 * N) = comp[1] == 'L' ? lon : Vector(unit - lon);
        return e;
      }
      if (comp.size() == 3 && comp[0] == 'P') {
        int mu = comp[1] - '0', nu = comp[2] - '0';
        if (mu < 0 || mu > 3 || nu < 0 || nu > 3 || mu == nu) throw bad();
        double sign = 1.0;
        if (mu > nu) {
          std::swap(mu, nu);
          sign = -1.0;
        }
        if (mu == 0) {
          e(block("p").offset + (nu - 1) * N + site) = sign;
        } else {
          const auto& pairs = spatial_pairs();
          auto it = std::find(pairs.begin(), pairs.end(), std::make_pair(mu, nu));
          e(block("beta").offset + (it - pairs.begin()) * N + site) = sign;
        }
        return e;
      }
      throw bad();
    }
  }
  throw bad();
}

nlohmann::json SliceModel::summary() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_) blocks.push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}});
  Eigen::Index kdim = kernel(system_.omega()).dim();
  return {{"model", spec_.name()},
          {"shape", lattice_.shape()},
          {"spacing", lattice_.spacing()},
          {"sites", lattice_.sites()},
          {"cell_volume", lattice_.cell_volume()},
          {"ambient_dim", dim()},
          {"omega_rank", dim() - kdim},
          {"omega_kernel_dim", kdim},
          {"blocks", blocks}};
}

SliceModel build_slice_system(const FieldTheorySpec& spec, const SpatialLattice& lattice) {
  return SliceModel(spec, lattice);
}

ConstraintChainResult analyze_slice(const SliceModel& model, double rank_rtol, int max_iter) {
  ConstraintChainResult r = constraint_algorithm(model.system(), rank_rtol, max_iter);
  if (model.inert_blocks().empty()) return r;
  Eigen::Index m = 0;
  for (const auto& name : model.inert_blocks()) m += model.block(name).size;
  Matrix rows = Matrix::Zero(m, model.dim());
  Eigen::Index i = 0;
  for (const auto& name : model.inert_blocks()) {
    const auto& b = model.block(name);
    for (Eigen::Index k = 0; k < b.size; ++k) rows(i++, b.offset + k) = 1.0;
  }
  return pin_final(model.system(), r, rows, Vector::Zero(m));
}

Vector restrict_to_slice(const SliceModel& model, const DiscretizedSection& sec, int t) {
  const auto& spec = model.spec();
  if (t < 0 || t >= sec.time_steps)
    throw Error(ErrorKind::IndexOutOfRange, "time index " + std::to_string(t) + " outside [0," +
                                                std::to_string(sec.time_steps) + ")");
  const Eigen::Index N = model.lattice().sites();
  if (sec.sites != N || sec.fiber != spec.fiber_dim() || sec.momenta_components != spec.momenta_components())
    throw Error(ErrorKind::ShapeMismatch, "section does not match the slice model");
  Vector z = Vector::Zero(model.dim());
  switch (spec.kind()) {
    case ModelKind::FreeParticle:
      z(0) = sec.phi_at(t, 0, 0);
      z(1) = sec.mom_at(t, 0, 0);
      break;
    case ModelKind::VectorBoson: {
      const int r = spec.fiber_dim(), d = model.lattice().dims();
      const Eigen::Index op = model.block("p").offset, ob = model.block("beta").offset;
      for (Eigen::Index s = 0; s < N; ++s)
        for (int a = 0; a < r; ++a) {
          z(a * N + s) = sec.phi_at(t, s, a);
          z(op + a * N + s) = -sec.mom_at(t, s, a);
          for (int j = 0; j < d; ++j) z(ob + (j * r + a) * N + s) = sec.mom_at(t, s, (j + 1) * r + a);
        }
      break;
    }
    case ModelKind::Electrodynamics: {
      const Eigen::Index op = model.block("p").offset, ob = model.block("beta").offset,
                         o0 = model.block("a0").offset;
      const auto& pairs = spatial_pairs();
      for (Eigen::Index s = 0; s < N; ++s) {
        z(o0 + s) = sec.phi_at(t, s, 0);
        for (int k = 0; k < 3; ++k) {
          z(k * N + s) = sec.phi_at(t, s, k + 1);
          z(op + k * N + s) = sec.mom_at(t, s, spec.pair_index(0, k + 1));
        }
        for (std::size_t c = 0; c < pairs.size(); ++c)
          z(ob + c * N + s) = sec.mom_at(t, s, spec.pair_index(pairs[c].first, pairs[c].second));
      }
      break;
    }
  }
  return z;
}

DiscretizedSection curve_to_section(const SliceModel& model, const std::vector<Vector>& states,
                                    const SpacetimeLattice& lattice) {
  if (static_cast<int>(states.size()) != lattice.time_steps)
    throw Error(ErrorKind::LengthMismatch, std::to_string(states.size()) + " states for " +
                                               std::to_string(lattice.time_steps) + " time steps");
  if (!(lattice.space == model.lattice())) throw Error(ErrorKind::ShapeMismatch, "spatial lattice differs from model");
  const auto& spec = model.spec();
  DiscretizedSection sec = DiscretizedSection::zeros(spec, lattice);
  const Eigen::Index N = model.lattice().sites();
  for (int t = 0; t < lattice.time_steps; ++t) {
    const Vector& z = states[t];
    if (z.size() != model.dim()) throw Error(ErrorKind::ShapeMismatch, "slice state has wrong length");
    switch (spec.kind()) {
      case ModelKind::FreeParticle:
        sec.phi_at(t, 0, 0) = z(0);
        sec.mom_at(t, 0, 0) = z(1);
        break;
      case ModelKind::VectorBoson: {
        const int r = spec.fiber_dim(), d = model.lattice().dims();
        const Eigen::Index op = model.block("p").offset, ob = model.block("beta").offset;
        for (Eigen::Index s = 0; s < N; ++s)
          for (int a = 0; a < r; ++a) {
            sec.phi_at(t, s, a) = z(a * N + s);
            sec.mom_at(t, s, a) = -z(op + a * N + s);
            for (int j = 0; j < d; ++j) sec.mom_at(t, s, (j + 1) * r + a) = z(ob + (j * r + a) * N + s);
          }
        break;
      }
      case ModelKind::Electrodynamics: {
        const Eigen::Index op = model.block("p").offset, ob = model.block("beta").offset,
                           o0 = model.block("a0").offset;
        const auto& pairs = spatial_pairs();
        for (Eigen::Index s = 0; s < N; ++s) {
          sec.phi_at(t, s, 0) = z(o0 + s);
          for (int k = 0; k < 3; ++k) {
            sec.phi_at(t, s, k + 1) = z(k * N + s);
            sec.mom_at(t, s, spec.pair_index(0, k + 1)) = z(op + k * N + s);
          }
          for (std::size_t c = 0; c < pairs.size(); ++c)
            sec.mom_at(t, s, spec.pair_index(pairs[c].first, pairs[c].second)) = z(ob + c * N + s);
        }
        break;
      }
    }
  }
  return sec;
}

}  // namespace covphase
