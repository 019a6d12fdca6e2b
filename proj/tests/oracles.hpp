#pragma once

// Independent reference computations used by the tests. Nothing here calls the
// library's solvers; only plain loops and textbook dense factorizations.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Rank by Gaussian elimination with full pivoting.
inline int gauss_rank(Matrix A, double tol = 1e-9) {
  int rank = 0;
  const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  std::vector<bool> used_col(n, false);
  for (int row = 0; row < m && rank < n; ++row) {
    int pr = -1, pc = -1;
    double best = tol;
    for (int i = rank; i < m; ++i)
      for (int j = 0; j < n; ++j)
        if (!used_col[j] && std::abs(A(i, j)) > best) {
          best = std::abs(A(i, j));
          pr = i;
          pc = j;
        }
    if (pr < 0) break;
    A.row(pr).swap(A.row(rank));
    used_col[pc] = true;
    for (int i = rank + 1; i < m; ++i) A.row(i) -= A(i, pc) / A(rank, pc) * A.row(rank);
    ++rank;
  }
  return rank;
}

// Dense Moore-Penrose inverse through an eigen-decomposition of a symmetric matrix.
inline Matrix symmetric_pinv(const Matrix& S, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  Vector inv = es.eigenvalues();
  double big = inv.cwiseAbs().maxCoeff();
  for (int i = 0; i < inv.size(); ++i) inv(i) = std::abs(inv(i)) > tol * big ? 1.0 / inv(i) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

struct Cubic {
  int n;      // sites per axis
  double h;   // spacing
  int d = 3;
  int sites() const {
    int s = 1;
    for (int j = 0; j < d; ++j) s *= n;
    return s;
  }
  std::vector<int> coords(int s) const {
    std::vector<int> c(d);
    for (int j = d - 1; j >= 0; --j) {
      c[j] = s % n;
      s /= n;
    }
    return c;
  }
  int index(const std::vector<int>& c) const {
    int s = 0;
    for (int j = 0; j < d; ++j) s = s * n + ((c[j] % n) + n) % n;
    return s;
  }
  double k(int m) const { return 2.0 * std::numbers::pi * m / (n * h); }
  double symbol(const std::vector<int>& m) const {
    double s = 0;
    for (int j = 0; j < d; ++j) {
      double v = std::sin(0.5 * k(m[j]) * h);
      s += 4.0 / (h * h) * v * v;
    }
    return s;
  }
};

// (1/(N h^d)) sum_k cos(w_k tau) e^{i k.(x2 - x1)}, w_k^2 = m^2 + symbol(k)
inline double vector_boson_mode_sum(const Cubic& L, double mass, const std::vector<int>& x1,
                                    const std::vector<int>& x2, double tau) {
  double s = 0;
  for (int q = 0; q < L.sites(); ++q) {
    auto m = L.coords(q);
    double w = std::sqrt(mass * mass + L.symbol(m));
    double ph = 0;
    for (int j = 0; j < L.d; ++j) ph += L.k(m[j]) * (x2[j] - x1[j]);
    s += std::cos(w * tau) * std::cos(ph);
  }
  return s / (L.sites() * std::pow(L.h, L.d));
}

// Row of the lattice field propagator: phi(x1, tau) = sum_y C(x1-y) phi(y) + S(x1-y) p(y)
// for the slice dynamics phi' = -p, p' = -lap phi + m^2 phi.
inline void vector_boson_kernels(const Cubic& L, double mass, const std::vector<int>& x1, double tau,
                                 Vector& cphi, Vector& cp) {
  const int N = L.sites();
  cphi = Vector::Zero(N);
  cp = Vector::Zero(N);
  for (int y = 0; y < N; ++y) {
    auto yc = L.coords(y);
    for (int q = 0; q < N; ++q) {
      auto m = L.coords(q);
      double w = std::sqrt(mass * mass + L.symbol(m));
      double ph = 0;
      for (int j = 0; j < L.d; ++j) ph += L.k(m[j]) * (x1[j] - yc[j]);
      cphi(y) += std::cos(w * tau) * std::cos(ph) / N;
      cp(y) += -std::sin(w * tau) / w * std::cos(ph) / N;
    }
  }
}

// (1/(N h^3)) sum_k T_kl(k) s(k, tau) e^{i k.(x1 - x2)} with T = I - g g^H/|g|^2,
// g_j = (e^{i k_j h} - 1)/h, s = sin(w tau)/w (tau at w = 0). T_kl(k) is the
// Fourier symbol of grad lap^+ div's complement, so the phase runs from x2 to x1.
inline double transverse_mode_sum(const Cubic& L, int kcomp, int lcomp, const std::vector<int>& x1,
                                  const std::vector<int>& x2, double tau) {
  using cd = std::complex<double>;
  cd s = 0;
  for (int q = 0; q < L.sites(); ++q) {
    auto m = L.coords(q);
    cd g[3];
    double g2 = 0;
    for (int j = 0; j < 3; ++j) {
      g[j] = (std::exp(cd(0, L.k(m[j]) * L.h)) - 1.0) / L.h;
      g2 += std::norm(g[j]);
    }
    cd T = (kcomp == lcomp) ? 1.0 : 0.0;
    if (g2 > 1e-14) T -= g[kcomp] * std::conj(g[lcomp]) / g2;
    double w = std::sqrt(g2);
    double sw = w > 1e-14 ? std::sin(w * tau) / w : tau;
    double ph = 0;
    for (int j = 0; j < 3; ++j) ph += L.k(m[j]) * (x1[j] - x2[j]);
    s += T * sw * std::exp(cd(0, ph));
  }
  return s.real() / (L.sites() * std::pow(L.h, 3));
}

inline Matrix random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = g(rng);
  return M;
}

inline Vector random_vector(int n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

}  // namespace oracle
