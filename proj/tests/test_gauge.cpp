#include <doctest.h>

#include <random>

#include "covphase/bracket.hpp"
#include "covphase/error.hpp"
#include "covphase/gauge.hpp"
#include "covphase/slicing.hpp"
#include "oracles.hpp"

using namespace covphase;

namespace {

Matrix dense_longitudinal(const SpatialLattice& L) {
  Matrix G(L.gradient()), D(L.divergence()), Lap(L.laplacian());
  return G * oracle::symmetric_pinv(Lap) * D;
}

Vector curl_defect(const SpatialLattice& L, const Vector& v) {
  const Eigen::Index N = L.sites();
  const int d = L.dims();
  Vector out = Vector::Zero(N * d * d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      out.segment((j * d + k) * N, N) =
          L.forward_difference(j) * v.segment(k * N, N) - L.forward_difference(k) * v.segment(j * N, N);
  return out;
}

}  // namespace

TEST_CASE("Poisson solver matches a dense pseudo-inverse") {
  std::mt19937_64 rng(1);
  SpatialLattice L({4, 3, 5}, {1.0, 0.5, 0.8});
  PoissonSolver ps(L);
  Vector rhs = oracle::random_vector(60, rng);
  Vector psi = ps.solve(rhs);
  CHECK(std::abs(psi.mean()) < 1e-14);
  Vector expect = oracle::symmetric_pinv(Matrix(L.laplacian())) * rhs;
  CHECK((psi - expect).norm() < 1e-10 * expect.norm());
  Vector centered = rhs.array() - rhs.mean();
  CHECK((L.laplacian() * psi - centered).norm() < 1e-10);
  CHECK_THROWS_AS(ps.solve(Vector::Zero(7)), Error);
}

TEST_CASE("Helmholtz decomposition") {
  std::mt19937_64 rng(2);
  SpatialLattice L({4, 4, 3}, {1.0, 1.0, 0.5});
  const Eigen::Index N = L.sites();

  SUBCASE("random field") {
    Matrix F = oracle::random_matrix(static_cast<int>(N), 3, rng);
    auto parts = helmholtz_decompose(L, F);
    Vector t = parts.transverse.reshaped(), l = parts.longitudinal.reshaped();
    CHECK((parts.transverse + parts.longitudinal - F).norm() < 1e-12);
    CHECK((L.divergence() * t).norm() < 1e-10);
    CHECK(curl_defect(L, l).norm() < 1e-10);
    CHECK(std::abs(t.dot(l)) < 1e-10);
    CHECK((l - dense_longitudinal(L) * Vector(F.reshaped())).norm() < 1e-10);
  }

  SUBCASE("gradient field is purely longitudinal") {
    Vector f = oracle::random_vector(static_cast<int>(N), rng);
    Vector g = L.gradient() * f;
    auto parts = helmholtz_decompose(L, g.reshaped(N, 3));
    CHECK(parts.transverse.norm() < 1e-10);
  }

  SUBCASE("constant field is purely transverse") {
    Matrix F(N, 3);
    F.col(0).setConstant(1.0);
    F.col(1).setConstant(-2.0);
    F.col(2).setConstant(0.5);
    auto parts = helmholtz_decompose(L, F);
    CHECK(parts.longitudinal.norm() < 1e-12);
  }

  CHECK_THROWS_AS(helmholtz_decompose(L, Matrix::Zero(N, 2)), Error);
}

TEST_CASE("longitudinal projector is an orthogonal projector") {
  std::mt19937_64 rng(3);
  SpatialLattice L = SpatialLattice::cubic(3, 3, 1.0);
  LongitudinalProjector P(L);
  Matrix I = Matrix::Identity(81, 81);
  Matrix Pm = P.apply(I);
  CHECK(max_abs(Pm - Pm.transpose()) < 1e-12);
  CHECK(max_abs(Pm * Pm - Pm) < 1e-12);
  CHECK(oracle::gauss_rank(Pm, 1e-8) == 26);
}

TEST_CASE("Coulomb connection") {
  auto m = build_slice_system(FieldTheorySpec::electrodynamics(), SpatialLattice::cubic(3, 3, 1.0));
  const Eigen::Index N = 27;
  auto r = analyze_slice(m);
  auto P = coulomb_projector(r, m);
  CHECK(P.dim() == r.final_space.dim());
  CHECK(P.rank() == N - 1);
  CHECK(P.rank() == r.kernel_final.dim());
  CHECK(P.idempotency_residual() < 1e-10);
  CHECK(P.range_residual() < 1e-10);
  CHECK(max_abs(P.matrix() * P.matrix() - P.matrix()) < 1e-10);
  CHECK(max_abs(r.omega_final * P.matrix()) < 1e-10);
  // its range contains the kernel
  const Matrix& K = r.kernel_final.basis;
  CHECK(max_abs(P.matrix() * K - K) < 1e-10);
  auto diag = P.diagnostics();
  CHECK(diag["rank"] == N - 1);

  SUBCASE("flow keeps horizontal states horizontal") {
    std::mt19937_64 rng(4);
    auto flow = build_flow(r, &P, &m);
    Vector w = oracle::random_vector(static_cast<int>(P.dim()), rng);
    w -= P.apply(w);
    CHECK(flow.horizontality_defect(w) < 1e-12);
    for (double t : {0.3, 1.7, -2.2}) {
      Vector wt = flow.evolve(w, t);
      CHECK(P.apply(wt).norm() < 1e-10 * w.norm());
    }
    Vector bad = w + K.col(0);
    try {
      flow.evolve(bad, 1.0);
      FAIL("expected NotHorizontal");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NotHorizontal);
    }
  }

  SUBCASE("error kinds") {
    auto vb = build_slice_system(FieldTheorySpec::vector_boson(1.0, 1, 3), SpatialLattice::cubic(3, 2, 1.0));
    auto rv = analyze_slice(vb);
    try {
      coulomb_projector(rv, vb);
      FAIL("expected NotGauge");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NotGauge);
    }
    auto fake = rv;
    fake.classification = Classification::Gauge;
    try {
      coulomb_projector(fake, vb);
      FAIL("expected UnsupportedSpec");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UnsupportedSpec);
    }
    auto shrunk = r;
    shrunk.kernel_final.basis = K.leftCols(K.cols() - 1);
    try {
      coulomb_projector(shrunk, m);
      FAIL("expected KernelMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::KernelMismatch);
    }
    try {
      build_flow(r);
      FAIL("expected MissingProjector");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingProjector);
    }
  }
}
