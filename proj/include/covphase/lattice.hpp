#pragma once

#include <vector>

#include "covphase/linalg.hpp"

namespace covphase {

// Periodic spatial lattice. Site index is row-major (last axis fastest).
// A lattice with empty shape is the single point of a d = 0 model.
class SpatialLattice {
 public:
  SpatialLattice() = default;
  SpatialLattice(std::vector<int> shape, std::vector<double> spacing);
  static SpatialLattice cubic(int d, int n, double h);

  int dims() const { return static_cast<int>(shape_.size()); }
  Eigen::Index sites() const { return sites_; }
  double cell_volume() const { return volume_; }
  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& spacing() const { return spacing_; }

  Eigen::Index index(const std::vector<int>& coords) const;
  std::vector<int> coords(Eigen::Index site) const;
  Eigen::Index neighbor(Eigen::Index site, int axis, int step) const;

  // (f(x + e_j) - f(x)) / h_j and (f(x) - f(x - e_j)) / h_j; D+^T = -D-
  SparseMatrix forward_difference(int axis) const;
  SparseMatrix backward_difference(int axis) const;
  // component-major stacking: rows j*N + site
  SparseMatrix gradient() const;
  SparseMatrix divergence() const;
  SparseMatrix laplacian() const;

  // k_j = 2 pi n_j / (N_j h_j) for the integer mode index of a site
  std::vector<double> wave_vector(Eigen::Index mode) const;
  // (4/h^2) sum_j sin^2(k_j h_j / 2), eigenvalue of -laplacian on that mode
  double laplacian_symbol(Eigen::Index mode) const;

  bool operator==(const SpatialLattice& o) const { return shape_ == o.shape_ && spacing_ == o.spacing_; }

 private:
  std::vector<int> shape_;
  std::vector<double> spacing_;
  std::vector<Eigen::Index> strides_;
  Eigen::Index sites_ = 1;
  double volume_ = 1.0;
};

struct SpacetimeLattice {
  int time_steps = 2;  // N_t samples t_n = t0 + n dt
  double dt = 1.0;
  double t0 = 0.0;
  SpatialLattice space;

  SpacetimeLattice() = default;
  SpacetimeLattice(int n_t, double step, SpatialLattice s, double start = 0.0);
  double time(int n) const { return t0 + n * dt; }
};

}  // namespace covphase
