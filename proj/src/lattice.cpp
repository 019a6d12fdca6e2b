#include "covphase/lattice.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "covphase/error.hpp"

namespace covphase {

namespace {
constexpr Eigen::Index kMaxSites = Eigen::Index(1) << 24;
}

SpatialLattice::SpatialLattice(std::vector<int> shape, std::vector<double> spacing)
    : shape_(std::move(shape)), spacing_(std::move(spacing)) {
  if (spacing_.size() == 1 && shape_.size() > 1) spacing_.assign(shape_.size(), spacing_[0]);
  if (spacing_.size() != shape_.size())
    throw Error(ErrorKind::ShapeMismatch, "spacing needs one entry per axis");
  strides_.assign(shape_.size(), 1);
  sites_ = 1;
  volume_ = 1.0;
  for (int j = static_cast<int>(shape_.size()) - 1; j >= 0; --j) {
    if (shape_[j] < 2) throw Error(ErrorKind::InvalidArgument, "lattice axis " + std::to_string(j) + " has < 2 sites");
    if (!(spacing_[j] > 0.0)) throw Error(ErrorKind::InvalidArgument, "lattice spacing must be positive");
    strides_[j] = sites_;
    sites_ *= shape_[j];
    if (sites_ > kMaxSites) throw Error(ErrorKind::InvalidArgument, "lattice too large");
    volume_ *= spacing_[j];
  }
}

SpatialLattice SpatialLattice::cubic(int d, int n, double h) {
  return SpatialLattice(std::vector<int>(d, n), std::vector<double>(d, h));
}

Eigen::Index SpatialLattice::index(const std::vector<int>& c) const {
  if (c.size() != shape_.size())
    throw Error(ErrorKind::IndexOutOfRange, "site needs " + std::to_string(shape_.size()) + " coordinates");
  Eigen::Index s = 0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (c[j] < 0 || c[j] >= shape_[j]) throw Error(ErrorKind::IndexOutOfRange, "site coordinate out of range");
    s += c[j] * strides_[j];
  }
  return s;
}

std::vector<int> SpatialLattice::coords(Eigen::Index site) const {
  if (site < 0 || site >= sites_) throw Error(ErrorKind::IndexOutOfRange, "site index out of range");
  std::vector<int> c(shape_.size());
  for (std::size_t j = 0; j < shape_.size(); ++j) c[j] = static_cast<int>((site / strides_[j]) % shape_[j]);
  return c;
}

Eigen::Index SpatialLattice::neighbor(Eigen::Index site, int axis, int step) const {
  const Eigen::Index n = shape_[axis];
  const Eigen::Index c = (site / strides_[axis]) % n;
  const Eigen::Index c2 = ((c + step) % n + n) % n;
  return site + (c2 - c) * strides_[axis];
}

SparseMatrix SpatialLattice::forward_difference(int axis) const {
  std::vector<Eigen::Triplet<double>> t;
  const double ih = 1.0 / spacing_[axis];
  for (Eigen::Index s = 0; s < sites_; ++s) {
    t.emplace_back(s, neighbor(s, axis, 1), ih);
    t.emplace_back(s, s, -ih);
  }
  SparseMatrix D(sites_, sites_);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

SparseMatrix SpatialLattice::backward_difference(int axis) const {
  std::vector<Eigen::Triplet<double>> t;
  const double ih = 1.0 / spacing_[axis];
  for (Eigen::Index s = 0; s < sites_; ++s) {
    t.emplace_back(s, s, ih);
    t.emplace_back(s, neighbor(s, axis, -1), -ih);
  }
  SparseMatrix D(sites_, sites_);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

SparseMatrix SpatialLattice::gradient() const {
  std::vector<Eigen::Triplet<double>> t;
  for (int j = 0; j < dims(); ++j) {
    SparseMatrix D = forward_difference(j);
    for (int k = 0; k < D.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(D, k); it; ++it) t.emplace_back(j * sites_ + it.row(), it.col(), it.value());
  }
  SparseMatrix G(dims() * sites_, sites_);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

SparseMatrix SpatialLattice::divergence() const {
  SparseMatrix G = gradient();
  return SparseMatrix(-SparseMatrix(G.transpose()));
}

SparseMatrix SpatialLattice::laplacian() const {
  SparseMatrix G = gradient();
  return SparseMatrix(-SparseMatrix(G.transpose()) * G);
}

std::vector<double> SpatialLattice::wave_vector(Eigen::Index mode) const {
  auto n = coords(mode);
  std::vector<double> k(n.size());
  for (std::size_t j = 0; j < n.size(); ++j)
    k[j] = 2.0 * std::numbers::pi * n[j] / (shape_[j] * spacing_[j]);
  return k;
}

double SpatialLattice::laplacian_symbol(Eigen::Index mode) const {
  auto k = wave_vector(mode);
  double s = 0.0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    double v = std::sin(0.5 * k[j] * spacing_[j]);
    s += 4.0 / (spacing_[j] * spacing_[j]) * v * v;
  }
  return s;
}

SpacetimeLattice::SpacetimeLattice(int n_t, double step, SpatialLattice s, double start)
    : time_steps(n_t), dt(step), t0(start), space(std::move(s)) {
  if (n_t < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 time samples");
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
}

}  // namespace covphase
