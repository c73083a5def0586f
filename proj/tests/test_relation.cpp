#include <doctest.h>

#include <cmath>

#include "loralab/relation.hpp"
#include "oracles.hpp"

using namespace loralab;

namespace {

ActivationTrace trace_with_states(const std::vector<Vector>& z) {
  ActivationTrace t;
  t.z = z;
  t.h.resize(z.size());
  return t;
}

RelationMatrix rel_from_entries(Matrix m, Phi phi = Phi::inner) {
  RelationMatrix r;
  r.entries = std::move(m);
  r.phi = phi;
  return r;
}

std::vector<int> layers_1_to(int n) {
  std::vector<int> out;
  for (int l = 1; l <= n; ++l) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("identical layer states give the all-ones cosine matrix") {
  Vector z(3);
  z << 1, 2, 3;
  ActivationTrace t = trace_with_states({z, z, z, z});  // z^0..z^3
  RelationMatrix r = relation_matrix(t, Phi::cosine, layers_1_to(3));
  CHECK((r.entries - Matrix::Ones(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  Vector sv = singular_values(r.entries);
  CHECK(sv[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(sv[1]) < 1e-12);
  CHECK(std::abs(sv[2]) < 1e-12);
}

TEST_CASE("orthogonal layer states give the identity cosine matrix") {
  Vector a = Vector::Zero(3), b = Vector::Zero(3), c = Vector::Zero(3);
  a[0] = 2.0;
  b[1] = -1.5;
  c[2] = 0.7;
  ActivationTrace t = trace_with_states({a, a, b, c});
  RelationMatrix r = relation_matrix(t, Phi::cosine, layers_1_to(3));
  CHECK((r.entries - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  Vector sv = singular_values(r.entries);
  for (int i = 0; i < 3; ++i) CHECK(sv[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inner product relation matches the hand example") {
  Vector z1(2), z2(2);
  z1 << 1, 0;
  z2 << 2, 0;
  ActivationTrace t = trace_with_states({Vector::Zero(2), z1, z2});
  RelationMatrix r = relation_matrix(t, Phi::inner, layers_1_to(2));
  Matrix expected(2, 2);
  expected << 1, 2, 2, 4;
  CHECK(r.entries == expected);
  Vector sv = singular_values(r.entries);
  CHECK(sv[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(std::abs(sv[1]) < 1e-12);
}

TEST_CASE("cosine diagonal is one and the matrix is PSD") {
  Rng rng(3, "data");
  for (int it = 0; it < 50; ++it) {
    std::vector<Vector> z;
    for (int l = 0; l <= 5; ++l) {
      Vector v(7);
      for (Index i = 0; i < 7; ++i) v[i] = rng.next_gaussian();
      z.push_back(v);
    }
    ActivationTrace t = trace_with_states(z);
    RelationMatrix r = relation_matrix(t, Phi::cosine, layers_1_to(5));
    CHECK((r.entries - r.entries.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(r.entries(i, i) - 1.0) <= 1e-12);
    Vector eig = eigh_sym(r.entries).values;
    CHECK(eig[eig.size() - 1] > -1e-10);

    RelationMatrix ri = relation_matrix(t, Phi::inner, layers_1_to(5));
    Vector eig_inner = eigh_sym(ri.entries).values;
    CHECK(eig_inner[eig_inner.size() - 1] > -1e-10);
  }
}

TEST_CASE("zero-norm states fall back to the epsilon guard") {
  Vector zero = Vector::Zero(4);
  Vector v = Vector::Ones(4);
  ActivationTrace t = trace_with_states({v, zero, v});
  RelationMatrix r = relation_matrix(t, Phi::cosine, layers_1_to(2));
  CHECK(r.zero_norm_states > 0);
  CHECK(r.entries(0, 0) == 0.0);  // 0/eps
  CHECK(r.entries(1, 1) == 1.0);
  CHECK(r.entries.allFinite());
}

TEST_CASE("relation construction rejects z^0 and empty subsets") {
  ActivationTrace t = trace_with_states({Vector::Ones(2), Vector::Ones(2)});
  CHECK_THROWS_AS(relation_matrix(t, Phi::inner, {0}), ContractViolation);
  CHECK_THROWS_AS(relation_matrix(t, Phi::inner, {}), ContractViolation);
  CHECK_THROWS_AS(relation_matrix(t, Phi::inner, {2}), ContractViolation);
}

TEST_CASE("sv alignment loss on constructed spectra") {
  // Identical matrices: zero loss, zero gradient.
  Rng rng(1, "data");
  RelationMatrix a = rel_from_entries(oracles::random_psd(rng, 3));
  Matrix grad;
  CHECK(sv_align_loss(a, a, &grad) == 0.0);
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);

  // Huber quadratic branch: spectra (3,1) vs (2.5,1).
  Matrix prev = Matrix::Zero(2, 2), cur = Matrix::Zero(2, 2);
  prev.diagonal() << 3, 1;
  cur.diagonal() << 2.5, 1;
  CHECK(sv_align_loss(rel_from_entries(prev), rel_from_entries(cur)) ==
        doctest::Approx(0.0625).epsilon(1e-12));

  // Huber linear branch: spectra (5,1) vs (2,1).
  prev.diagonal() << 5, 1;
  cur.diagonal() << 2, 1;
  CHECK(sv_align_loss(rel_from_entries(prev), rel_from_entries(cur)) ==
        doctest::Approx(1.25).epsilon(1e-12));

  Matrix bad = Matrix::Zero(3, 3);
  CHECK_THROWS_AS(sv_align_loss(rel_from_entries(prev), rel_from_entries(bad)),
                  ContractViolation);
}

TEST_CASE("sv alignment is invariant to consistent layer permutations") {
  Rng rng(17, "data");
  Matrix p = oracles::random_psd(rng, 4);
  Matrix c = oracles::random_psd(rng, 4);
  double base = sv_align_loss(rel_from_entries(p), rel_from_entries(c));

  std::vector<int> perm{2, 0, 3, 1};
  Matrix pp(4, 4), cp(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      pp(i, j) = p(perm[i], perm[j]);
      cp(i, j) = c(perm[i], perm[j]);
    }
  double permuted = sv_align_loss(rel_from_entries(pp), rel_from_entries(cp));
  CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("sv alignment gradient matches central differences on entries") {
  Rng rng(23, "data");
  Matrix p = oracles::random_psd(rng, 4);
  Matrix c = oracles::random_psd(rng, 4);
  RelationMatrix prev = rel_from_entries(p);

  Matrix grad;
  sv_align_loss(prev, rel_from_entries(c), &grad);

  const double step = 1e-6;
  for (Index i = 0; i < 4; ++i) {
    for (Index j = i; j < 4; ++j) {
      Matrix up = c, down = c;
      up(i, j) += step;
      up(j, i) = up(i, j);
      down(i, j) -= step;
      down(j, i) = down(i, j);
      if (i == j) {
        up(i, i) = c(i, i) + step;
        down(i, i) = c(i, i) - step;
      }
      double fd = (sv_align_loss(prev, rel_from_entries(up)) -
                   sv_align_loss(prev, rel_from_entries(down))) /
                  (2.0 * step);
      double analytic = (i == j) ? grad(i, i) : grad(i, j) + grad(j, i);
      CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("p2p loss and gradient") {
  Rng rng(29, "data");
  Matrix p = oracles::random_psd(rng, 3);
  CHECK(p2p_loss(rel_from_entries(p), rel_from_entries(p)) == 0.0);

  // Uniform entry gap of 0.5 in the quadratic branch.
  Matrix c = p.array() - 0.5;
  CHECK(p2p_loss(rel_from_entries(p), rel_from_entries(c)) ==
        doctest::Approx(0.125).epsilon(1e-12));

  // Scalar-loop oracle on a random pair.
  Matrix q = oracles::random_psd(rng, 3);
  double expected = 0.0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) expected += huber(p(i, j) - q(i, j));
  expected /= 9.0;
  CHECK(p2p_loss(rel_from_entries(p), rel_from_entries(q)) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("batch averaging can hide per-sample deviations") {
  Matrix base = Matrix::Zero(2, 2);
  base.diagonal() << 2, 1;
  Matrix bump(2, 2);
  bump << 0, 0.3, 0.3, 0;

  std::vector<RelationMatrix> prev{rel_from_entries(base + bump), rel_from_entries(base - bump)};
  std::vector<RelationMatrix> cur{rel_from_entries(base), rel_from_entries(base)};

  double per_sample = 0.0;
  for (int i = 0; i < 2; ++i) per_sample += sv_align_loss(prev[i], cur[i]);
  per_sample /= 2.0;
  CHECK(per_sample > 1e-3);
  CHECK(batch_eigen_loss(prev, cur) < 1e-15);  // deviations cancel in the mean

  // Identical pairs and a single-sample batch reduce to the per-sample loss.
  std::vector<RelationMatrix> prev_same{prev[0], prev[0]};
  std::vector<RelationMatrix> cur_same{cur[0], cur[0]};
  CHECK(batch_eigen_loss(prev_same, cur_same) ==
        doctest::Approx(sv_align_loss(prev[0], cur[0])).epsilon(1e-14));
  std::vector<RelationMatrix> prev_one{prev[0]};
  std::vector<RelationMatrix> cur_one{cur[0]};
  CHECK(batch_eigen_loss(prev_one, cur_one) ==
        doctest::Approx(sv_align_loss(prev[0], cur[0])).epsilon(1e-14));

  CHECK_THROWS_AS(batch_eigen_loss({}, {}), ContractViolation);
}

TEST_CASE("relation drift is the frobenius distance") {
  Rng rng(31, "data");
  Matrix a = oracles::random_psd(rng, 3);
  CHECK(relation_drift(rel_from_entries(a), rel_from_entries(a)) == 0.0);

  Matrix b = a;
  b(0, 1) += 0.3;
  b(1, 0) += 0.3;
  CHECK(relation_drift(rel_from_entries(a), rel_from_entries(b)) ==
        doctest::Approx(std::sqrt(2.0 * 0.09)).epsilon(1e-12));

  Matrix c = oracles::random_psd(rng, 3);
  CHECK(relation_drift(rel_from_entries(a), rel_from_entries(c)) ==
        doctest::Approx(oracles::scalar_frobenius(a - c)).epsilon(1e-13));

  RelationMatrix cosine_flavor = rel_from_entries(a, Phi::cosine);
  CHECK_THROWS_AS(relation_drift(rel_from_entries(a), cosine_flavor), ContractViolation);
}

TEST_CASE("weyl check closed-form example") {
  Matrix r = Matrix::Zero(2, 2);
  r.diagonal() << 3, 1;
  WeylReport zero = weyl_check(r, Matrix::Zero(2, 2));
  CHECK(zero.max_shift == 0.0);
  CHECK(zero.holds);

  Matrix e(2, 2);
  e << 0, 0.1, 0.1, 0;
  WeylReport rep = weyl_check(r, e);
  double expected_gap = std::sqrt(1.01) - 1.0;  // eigenvalues move to 2 +- sqrt(1.01)
  CHECK(rep.max_shift == doctest::Approx(expected_gap).epsilon(1e-9));
  CHECK(rep.e_norm == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(rep.holds);
}

TEST_CASE("relation backward matches finite differences through the states") {
  Rng rng(41, "data");
  for (Phi phi : {Phi::cosine, Phi::inner}) {
    std::vector<Vector> z;
    for (int l = 0; l <= 4; ++l) {
      Vector v(6);
      for (Index i = 0; i < 6; ++i) v[i] = rng.next_gaussian();
      z.push_back(v);
    }
    std::vector<int> subset{1, 2, 4};
    auto loss_of = [&](const std::vector<Vector>& states) {
      ActivationTrace t = trace_with_states(states);
      RelationMatrix r = relation_matrix(t, phi, subset);
      // Fixed quadratic functional of the entries.
      double s = 0.0;
      for (Index i = 0; i < r.entries.rows(); ++i)
        for (Index j = 0; j < r.entries.cols(); ++j)
          s += (0.3 + 0.1 * static_cast<double>(i + 2 * j)) * r.entries(i, j) *
               r.entries(i, j);
      return 0.5 * s;
    };

    ActivationTrace t = trace_with_states(z);
    RelationMatrix r = relation_matrix(t, phi, subset);
    Matrix grad_entries(r.entries.rows(), r.entries.cols());
    for (Index i = 0; i < r.entries.rows(); ++i)
      for (Index j = 0; j < r.entries.cols(); ++j)
        grad_entries(i, j) = (0.3 + 0.1 * static_cast<double>(i + 2 * j)) * r.entries(i, j);

    std::vector<Vector> gz(z.size(), Vector::Zero(6));
    relation_backward(t, phi, subset, grad_entries, gz);

    const double step = 1e-6;
    for (int l : subset) {
      for (Index k = 0; k < 6; ++k) {
        auto bumped = z;
        bumped[static_cast<std::size_t>(l)][k] += step;
        double up = loss_of(bumped);
        bumped[static_cast<std::size_t>(l)][k] -= 2.0 * step;
        double down = loss_of(bumped);
        double fd = (up - down) / (2.0 * step);
        CHECK(gz[static_cast<std::size_t>(l)][k] == doctest::Approx(fd).epsilon(1e-5));
      }
    }
    CHECK(gz[0].cwiseAbs().maxCoeff() == 0.0);  // z^0 is outside the subset
    CHECK(gz[3].cwiseAbs().maxCoeff() == 0.0);  // layer 3 not in subset
  }
}

TEST_CASE("alignment config validation") {
  AlignmentConfig cfg;
  cfg.huber_delta = 2.0;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg = AlignmentConfig{};
  cfg.layer_subset = {0};
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.layer_subset = {5};
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.layer_subset = {1, 4};
  CHECK_NOTHROW(cfg.validate(4));
  CHECK(AlignmentConfig{}.resolved_subset(3) == std::vector<int>{1, 2, 3});
}
