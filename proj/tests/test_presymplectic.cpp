#include <doctest.h>

#include <random>

#include "covphase/error.hpp"
#include "covphase/presymplectic.hpp"
#include "oracles.hpp"

using namespace covphase;

namespace {

Matrix pairing(int n_pairs, int n_free) {
  const int n = 2 * n_pairs + n_free;
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n_pairs; ++i) {
    w(i, n_pairs + i) = 1.0;
    w(n_pairs + i, i) = -1.0;
  }
  return w;
}

Matrix sym(const Matrix& A) { return 0.5 * (A + A.transpose()); }

bool same_span(const Matrix& A, const Matrix& B, double tol = 1e-10) {
  if (A.cols() != B.cols()) return false;
  if (A.cols() == 0) return true;
  Matrix PA = A * (A.transpose() * A).inverse() * A.transpose();
  return max_abs(PA * B - B) < tol;
}

}  // namespace

TEST_CASE("kernel of small forms") {
  Matrix w2(2, 2);
  w2 << 0, 1, -1, 0;
  CHECK(kernel(w2).dim() == 0);

  Matrix w3 = pairing(1, 1);
  auto K = kernel(w3);
  REQUIRE(K.dim() == 1);
  CHECK(std::abs(std::abs(K.basis(2, 0)) - 1.0) < 1e-14);

  CHECK(kernel(Matrix::Zero(3, 3)).dim() == 3);

  Matrix bad = w3;
  bad(0, 1) = 0.5;
  CHECK_THROWS_AS(kernel(bad), Error);
  try {
    kernel(bad);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonAntisymmetric);
  }
}

TEST_CASE("kernel threshold is relative to the largest singular value") {
  Matrix w = 1e6 * pairing(2, 0);
  w(1, 3) = 1e-6;  // tiny second pair strength relative to 1e6
  w(3, 1) = -1e-6;
  w(0, 2) = 1e6;
  w(2, 0) = -1e6;
  CHECK(kernel(w, 1e-10).dim() == 2);
  CHECK(kernel(w, 1e-13).dim() == 0);
}

TEST_CASE("orthosymplectic complement") {
  Matrix w3 = pairing(1, 1);
  auto sys = PresymplecticSystem(w3, QuadraticHamiltonian::homogeneous(Matrix::Zero(3, 3)));

  Matrix w2(2, 2);
  w2 << 0, 1, -1, 0;
  auto sys2 = PresymplecticSystem(w2, QuadraticHamiltonian::homogeneous(Matrix::Identity(2, 2)));
  CHECK(orthosymplectic_complement(sys2, LinearSubspace::full(2)).dim() == 0);

  auto c_full = orthosymplectic_complement(sys, LinearSubspace::full(3));
  Matrix e3 = Matrix::Zero(3, 1);
  e3(2, 0) = 1;
  CHECK(same_span(c_full.basis, e3));

  Matrix e1 = Matrix::Zero(3, 1);
  e1(0, 0) = 1;
  auto c1 = orthosymplectic_complement(sys, LinearSubspace::from_basis(e1));
  Matrix e13 = Matrix::Zero(3, 2);
  e13(0, 0) = 1;
  e13(2, 1) = 1;
  CHECK(same_span(c1.basis, e13));

  CHECK_THROWS_AS(orthosymplectic_complement(sys, LinearSubspace::full(4)), Error);
}

TEST_CASE("constraint algorithm on a symplectic plane") {
  Matrix w2(2, 2);
  w2 << 0, 1, -1, 0;
  Matrix Q(2, 2);
  Q << 2, 0.3, 0.3, -1;
  auto r = constraint_algorithm(PresymplecticSystem(w2, QuadraticHamiltonian::homogeneous(Q)));
  CHECK(r.chain.size() == 1);
  CHECK(r.iterations == 0);
  CHECK(r.classification == Classification::Symplectic);
  CHECK(max_abs(r.omega_final - w2) < 1e-15);
}

TEST_CASE("constraint algorithm eliminates an auxiliary variable") {
  // z = (q, p, beta), H = 1/2 (p^2 + beta^2) + beta q
  Matrix w = pairing(1, 1);
  Matrix Q(3, 3);
  Q << 0, 0, 1, 0, 1, 0, 1, 0, 1;
  auto sys = PresymplecticSystem(w, QuadraticHamiltonian::homogeneous(Q));
  auto r = constraint_algorithm(sys);
  REQUIRE(r.iterations == 1);
  CHECK(r.final_space.dim() == 2);
  CHECK(r.classification == Classification::Symplectic);
  // M1 = {beta = -q}
  Matrix M1(3, 2);
  M1 << 1, 0, 0, 1, -1, 0;
  CHECK(same_span(r.final_space.basis, M1));
  // the recorded condition is beta + q = 0
  Vector row = r.steps[0].rows.row(0).transpose();
  CHECK(std::abs(std::abs(row(0)) - 1.0) < 1e-12);
  CHECK(std::abs(row(0) - row(2)) < 1e-12);
  CHECK(singular_values(r.omega_final).minCoeff() > 0.1);
}

TEST_CASE("constraint algorithm leaves a gauge kernel") {
  // z = (a, p, theta), H = 1/2 p^2 + theta p
  Matrix w = pairing(1, 1);
  Matrix Q(3, 3);
  Q << 0, 0, 0, 0, 1, 1, 0, 1, 0;
  auto r = constraint_algorithm(PresymplecticSystem(w, QuadraticHamiltonian::homogeneous(Q)));
  REQUIRE(r.iterations == 1);
  CHECK(r.final_space.dim() == 2);
  Matrix M1(3, 2);
  M1 << 1, 0, 0, 0, 0, 1;
  CHECK(same_span(r.final_space.basis, M1));
  CHECK(max_abs(r.omega_final) < 1e-15);
  CHECK(r.classification == Classification::Gauge);
  CHECK(r.kernel_final.dim() == 2);
}

TEST_CASE("inconsistent affine constraints and non-convergence") {
  // omega = 0 on R^1 with H = z: dH . e1 = 1 can never vanish
  Matrix w = Matrix::Zero(1, 1);
  Vector b = Vector::Ones(1);
  auto sys = PresymplecticSystem(w, QuadraticHamiltonian(Matrix::Zero(1, 1), b, 0.0));
  try {
    constraint_algorithm(sys);
    FAIL("expected EmptyFinalManifold");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyFinalManifold);
  }

  // multiplier model H = 1/2 p^2 + lambda q: q = 0, then p = 0, then lambda = 0
  Matrix w3 = pairing(1, 1);
  Matrix Q = Matrix::Zero(3, 3);
  Q(1, 1) = 1;
  Q(0, 2) = Q(2, 0) = 1;
  auto sys3 = PresymplecticSystem(w3, QuadraticHamiltonian::homogeneous(Q));
  auto full = constraint_algorithm(sys3);
  CHECK(full.iterations == 3);
  CHECK(full.final_space.dim() == 0);
  for (int m : {1, 2}) {
    try {
      constraint_algorithm(sys3, kDefaultRankRtol, m);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoConvergence);
    }
  }
  CHECK(constraint_algorithm(sys3, kDefaultRankRtol, 3).iterations == 3);
}

TEST_CASE("affine offsets are carried through the chain") {
  // H = 1/2 (p^2 + beta^2) + beta q - 2 beta  => beta = 2 - q
  Matrix w = pairing(1, 1);
  Matrix Q(3, 3);
  Q << 0, 0, 1, 0, 1, 0, 1, 0, 1;
  Vector b(3);
  b << 0, 0, -2;
  auto r = constraint_algorithm(PresymplecticSystem(w, QuadraticHamiltonian(Q, b, 0.5)));
  REQUIRE(r.iterations == 1);
  for (double s : {-1.0, 0.0, 2.5}) {
    Vector z = r.final_space.embed(Vector::Constant(2, s));
    CHECK(std::abs(z(2) - (2.0 - z(0))) < 1e-12);
  }
  CHECK((r.final_space.basis.transpose() * r.final_space.offset).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random systems satisfy the chain invariants") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int pairs = 2 + trial % 3, free = 1 + trial % 4, n = 2 * pairs + free;
    // random coordinates of a planted degenerate form
    Matrix T = oracle::random_matrix(n, n, rng);
    Matrix w = T.transpose() * pairing(pairs, free) * T;
    Matrix Q = sym(oracle::random_matrix(n, n, rng));
    auto sys = PresymplecticSystem(0.5 * (w - w.transpose()), QuadraticHamiltonian::homogeneous(Q));
    ConstraintChainResult r;
    try {
      r = constraint_algorithm(sys);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyFinalManifold);
      continue;
    }
    for (std::size_t i = 1; i < r.chain.size(); ++i) CHECK(r.chain[i].dim() < r.chain[i - 1].dim());
    for (const auto& S : r.chain) CHECK(S.orthonormality_defect() < 1e-10);
    const Matrix& B = r.final_space.basis;
    CHECK(max_abs(r.omega_final - B.transpose() * sys.omega() * B) < 1e-12);
    CHECK(max_abs(r.hamiltonian_final.Q() - B.transpose() * Q * B) < 1e-12);
    CHECK((r.classification == Classification::Symplectic) == (r.kernel_final.dim() == 0));
    Matrix probes = oracle::random_matrix(static_cast<int>(B.cols()), 5, rng);
    CHECK(stability_defect(sys, r, probes) < 1e-10);
  }
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(3);
  Matrix Q = sym(oracle::random_matrix(5, 5, rng));
  Vector b = oracle::random_vector(5, rng);
  QuadraticHamiltonian H(Q, b, 0.7);
  Vector z = oracle::random_vector(5, rng);
  Vector g = H.gradient(z);
  for (int i = 0; i < 5; ++i) {
    const double eps = 1e-6;
    Vector e = Vector::Unit(5, i) * eps;
    double fd = (H.value(z + e) - H.value(z - e)) / (2 * eps);
    CHECK(std::abs(fd - g(i)) < 1e-8);
  }
  Matrix asym = Q;
  asym(0, 1) += 1e-9;
  CHECK_THROWS_AS(QuadraticHamiltonian(asym, b, 0.0), Error);
}

TEST_CASE("flat solve") {
  Matrix w2(2, 2);
  w2 << 0, 1, -1, 0;
  Vector c(2);
  c << 1, 0;
  Vector X = flat_solve(w2, c);
  CHECK(std::abs(X(0) - 0.0) < 1e-15);
  CHECK(std::abs(X(1) + 1.0) < 1e-15);

  try {
    flat_solve(Matrix::Zero(2, 2), c);
    FAIL("expected DegenerateWithoutConnection");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateWithoutConnection);
  }
}

TEST_CASE("flat solve with a tilted connection on a gauge toy") {
  // final coordinates (q, p, g1, g2), gauge directions g1, g2
  Matrix w = pairing(1, 2);
  Matrix K(4, 2);
  K << 0, 0, 0, 0, 1, 0, 0, 1;
  Matrix Hb(4, 2);  // chosen horizontal complement, not orthogonal to K
  Hb << 1, 0, 0, 1, 0.5, 0, 0, -0.3;
  Matrix Bfull(4, 4);
  Bfull << Hb, K;
  Matrix P = Bfull * Eigen::Vector4d(0, 0, 1, 1).asDiagonal() * Bfull.inverse();  // range K, kernel Hb
  REQUIRE(max_abs(P * P - P) < 1e-14);

  Vector c(4);
  c << 0.7, -1.3, 0, 0;
  Vector X = flat_solve(w, c, &P);
  CHECK((w.transpose() * X - c).norm() < 1e-12);
  CHECK((P * X).norm() < 1e-12);

  // brute force: stacked least squares [Omega^T; P] X = [c; 0]
  Matrix A(8, 4);
  A << w.transpose(), P;
  Vector rhs = Vector::Zero(8);
  rhs.head(4) = c;
  Vector Xls = A.colPivHouseholderQr().solve(rhs);
  CHECK((X - Xls).norm() < 1e-12);

  Vector bad = c;
  bad(2) = 1.0;
  try {
    flat_solve(w, bad, &P);
    FAIL("expected InconsistentCovector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InconsistentCovector);
  }
}

TEST_CASE("flat solve depends continuously on the covector") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix T = oracle::random_matrix(6, 6, rng);
    Matrix w = T.transpose() * pairing(3, 0) * T;
    w = 0.5 * (w - w.transpose());
    FlatMap flat(w);
    Vector c = oracle::random_vector(6, rng);
    Vector dc = 1e-7 * oracle::random_vector(6, rng);
    Vector sv = singular_values(w);
    double kappa_inv = 1.0 / sv.minCoeff();
    CHECK((flat.solve(c + dc) - flat.solve(c)).norm() <= 1.0001 * kappa_inv * dc.norm());
    CHECK((w.transpose() * flat.solve(c) - c).norm() < 1e-10 * std::max(1.0, c.norm() * sv(0) * kappa_inv));
  }
}

TEST_CASE("system json round trip") {
  Matrix w = pairing(1, 1);
  Matrix Q(3, 3);
  Q << 0, 0, 1, 0, 1, 0, 1, 0, 1;
  PresymplecticSystem s(w, QuadraticHamiltonian(Q, Vector::Ones(3), 2.0), {"q", "p", "beta"});
  auto j = system_to_json(s);
  auto s2 = system_from_json(nlohmann::json::parse(j.dump()));
  CHECK(s2.omega() == s.omega());
  CHECK(s2.hamiltonian().Q() == s.hamiltonian().Q());
  CHECK(s2.hamiltonian().b() == s.hamiltonian().b());
  CHECK(s2.hamiltonian().c() == 2.0);
  CHECK(s2.labels() == s.labels());

  auto bad = j;
  bad["omega"]["data"][1] = 0.25;
  CHECK_THROWS_AS(system_from_json(bad), Error);
  bad = j;
  bad["omega"]["rows"] = 2;
  CHECK_THROWS_AS(system_from_json(bad), Error);
}

TEST_CASE("null space deflation agrees with a plain SVD") {
  std::mt19937_64 rng(5);
  Matrix M = Matrix::Zero(6, 9);
  M.block(1, 2, 3, 4) = oracle::random_matrix(3, 4, rng);
  M.block(4, 6, 2, 2) = oracle::random_matrix(2, 2, rng);
  Matrix N = null_space(M, 1e-12);
  CHECK(N.cols() == 9 - oracle::gauss_rank(M));
  CHECK(max_abs(M * N) < 1e-12);
  CHECK(max_abs(N.transpose() * N - Matrix::Identity(N.cols(), N.cols())) < 1e-12);
}
