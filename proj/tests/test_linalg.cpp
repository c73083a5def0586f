#include <doctest.h>

#include <cmath>

#include "loralab/linalg.hpp"
#include "oracles.hpp"

using namespace loralab;

TEST_CASE("identity eigendecomposition") {
  Spectrum s = eigh_sym(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(s.values[i] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((s.vectors * s.vectors.transpose() - Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("symmetric 2x2 closed form") {
  Matrix m(2, 2);
  m << 2, 1, 1, 2;
  Spectrum s = eigh_sym(m);
  CHECK(s.values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(s.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // Eigenvectors are determined up to sign.
  CHECK(std::abs(std::abs(s.vectors.col(0).dot(Vector::Constant(2, inv_sqrt2))) - 1.0) < 1e-12);
  Vector second(2);
  second << inv_sqrt2, -inv_sqrt2;
  CHECK(std::abs(std::abs(s.vectors.col(1).dot(second)) - 1.0) < 1e-12);
}

TEST_CASE("random symmetric matrices match the reference oracle") {
  Rng rng(123, "data");
  for (int it = 0; it < 200; ++it) {
    Index n = 1 + static_cast<Index>(rng.next_below(8));
    Matrix m = oracles::random_symmetric(rng, n, 2.0);
    Spectrum s = eigh_sym(m);
    std::vector<double> expected = oracles::reference_eigs(m);
    REQUIRE(static_cast<Index>(expected.size()) == n);
    for (Index i = 0; i < n; ++i)
      CHECK(std::abs(s.values[i] - expected[static_cast<std::size_t>(i)]) < 1e-10);
  }
}

TEST_CASE("reconstruction and orthonormality invariants") {
  Rng rng(7, "data");
  for (int it = 0; it < 100; ++it) {
    Index n = 2 + static_cast<Index>(rng.next_below(7));
    Matrix m = oracles::random_symmetric(rng, n);
    Spectrum s = eigh_sym(m);
    for (Index i = 0; i + 1 < n; ++i) CHECK(s.values[i] >= s.values[i + 1]);
    Matrix recon = s.vectors * s.values.asDiagonal() * s.vectors.transpose();
    CHECK((recon - m).norm() < 1e-9);
    CHECK((s.vectors.transpose() * s.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("eigh_sym rejects bad input") {
  CHECK_THROWS_AS(eigh_sym(Matrix::Zero(2, 3)), ContractViolation);
  Matrix asym(2, 2);
  asym << 1, 2, 3, 4;
  CHECK_THROWS_AS(eigh_sym(asym), ContractViolation);
}

TEST_CASE("eigh_sym is deterministic") {
  Rng rng(15, "data");
  Matrix m = oracles::random_symmetric(rng, 6);
  Spectrum a = eigh_sym(m);
  Spectrum b = eigh_sym(m);
  CHECK(a.values == b.values);
  CHECK(a.vectors == b.vectors);
}

TEST_CASE("singular values flip eigenvalue signs") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = -2.0;
  m(1, 1) = 1.0;
  Vector sv = singular_values(m);
  CHECK(sv[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sv[1] == doctest::Approx(1.0).epsilon(1e-14));

  Vector zero_sv = singular_values(Matrix::Zero(4, 4));
  for (int i = 0; i < 4; ++i) CHECK(zero_sv[i] == 0.0);
}

TEST_CASE("singular values of a PSD matrix equal its eigenvalues") {
  Rng rng(31, "data");
  for (int it = 0; it < 50; ++it) {
    Matrix m = oracles::random_psd(rng, 5);
    Vector sv = singular_values(m);
    Vector ev = eigh_sym(m).values;
    for (Index i = 0; i < 5; ++i) CHECK(sv[i] == doctest::Approx(ev[i]).epsilon(1e-12));
  }
}

TEST_CASE("singular spectrum tracks signs and order") {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = -5.0;
  m(1, 1) = 3.0;
  m(2, 2) = 1.0;
  SingularSpectrum s = singular_spectrum(m);
  CHECK(s.values[0] == doctest::Approx(5.0));
  CHECK(s.signs[0] == -1.0);
  CHECK(s.values[1] == doctest::Approx(3.0));
  CHECK(s.signs[1] == 1.0);
  CHECK(std::abs(s.vectors(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("frobenius norm basics and oracle") {
  Matrix m(2, 2);
  m << 3, 4, 0, 0;
  CHECK(frobenius_norm(m) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(frobenius_norm(Matrix::Zero(3, 3)) == 0.0);

  Rng rng(77, "data");
  Matrix a = oracles::random_psd(rng, 6);
  Matrix b = oracles::random_psd(rng, 6);
  CHECK(frobenius_norm(a - b) == doctest::Approx(oracles::scalar_frobenius(a - b)).epsilon(1e-13));
}

TEST_CASE("weyl stability over random symmetric pairs") {
  Rng rng(99, "data");
  for (int it = 0; it < 1000; ++it) {
    Index n = 2 + static_cast<Index>(rng.next_below(7));
    Matrix r = oracles::random_psd(rng, n);
    Matrix e = oracles::random_symmetric(rng, n, 0.5);
    Vector sv_r = singular_values(r);
    Vector sv_p = singular_values(r + e);
    double bound = e.norm() + 1e-9;
    for (Index i = 0; i < n; ++i) CHECK(std::abs(sv_p[i] - sv_r[i]) <= bound);
  }
}
