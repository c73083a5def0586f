#pragma once

// Independent reference computations for the test suite. Everything here
// avoids the library's eigensolver and reverse-mode paths on purpose:
// closed-form characteristic polynomial roots up to 3x3, long-double power
// iteration with deflation up to 8x8, and plain scalar loops.

#include <algorithm>
#include <cmath>
#include <vector>

#include "loralab/linalg.hpp"
#include "loralab/rng.hpp"
#include "loralab/stream.hpp"

namespace oracles {

using loralab::Index;
using loralab::Matrix;
using loralab::Vector;

// Eigenvalues of a symmetric matrix up to 3x3 from the characteristic
// polynomial, descending.
inline std::vector<double> charpoly_eigs(const Matrix& m) {
  const Index n = m.rows();
  std::vector<double> eigs;
  if (n == 1) {
    eigs = {m(0, 0)};
  } else if (n == 2) {
    double tr = m(0, 0) + m(1, 1);
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
    eigs = {(tr + disc) / 2.0, (tr - disc) / 2.0};
  } else if (n == 3) {
    double p1 = m(0, 1) * m(0, 1) + m(0, 2) * m(0, 2) + m(1, 2) * m(1, 2);
    if (p1 == 0.0) {
      eigs = {m(0, 0), m(1, 1), m(2, 2)};
    } else {
      double q = (m(0, 0) + m(1, 1) + m(2, 2)) / 3.0;
      double p2 = (m(0, 0) - q) * (m(0, 0) - q) + (m(1, 1) - q) * (m(1, 1) - q) +
                  (m(2, 2) - q) * (m(2, 2) - q) + 2.0 * p1;
      double p = std::sqrt(p2 / 6.0);
      Matrix b = (m - q * Matrix::Identity(3, 3)) / p;
      double r = b.determinant() / 2.0;
      r = std::clamp(r, -1.0, 1.0);
      double phi = std::acos(r) / 3.0;
      double e1 = q + 2.0 * p * std::cos(phi);
      double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
      eigs = {e1, 3.0 * q - e1 - e3, e3};
    }
  }
  std::sort(eigs.begin(), eigs.end(), std::greater<double>());
  return eigs;
}

namespace detail {

using LVec = std::vector<long double>;
using LMat = std::vector<LVec>;

inline LMat lmat(const Matrix& m) {
  LMat out(static_cast<std::size_t>(m.rows()), LVec(static_cast<std::size_t>(m.cols())));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          static_cast<long double>(m(i, j));
  return out;
}

inline LMat lmul(const LMat& a, const LMat& b) {
  std::size_t n = a.size();
  LMat out(n, LVec(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      long double aik = a[i][k];
      if (aik == 0.0L) continue;
      for (std::size_t j = 0; j < n; ++j) out[i][j] += aik * b[k][j];
    }
  return out;
}

inline long double lfrob(const LMat& a) {
  long double s = 0.0L;
  for (const auto& row : a)
    for (long double v : row) s += v * v;
  return std::sqrt(s);
}

inline void lscale(LMat& a, long double f) {
  for (auto& row : a)
    for (long double& v : row) v *= f;
}

inline LVec lmatvec(const LMat& a, const LVec& x) {
  std::size_t n = a.size();
  LVec out(n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a[i][j] * x[j];
  return out;
}

inline long double ldot(const LVec& a, const LVec& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void lnormalize(LVec& v) {
  long double n = std::sqrt(ldot(v, v));
  if (n > 0.0L)
    for (long double& x : v) x /= n;
}

inline void orthogonalize(LVec& v, const std::vector<LVec>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const LVec& b : basis) {
      long double c = ldot(v, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
    }
}

}  // namespace detail

// Eigenvalues of a symmetric matrix up to 8x8 by long-double power
// iteration: the dominant subspace is extracted by repeated squaring of the
// shifted positive-definite matrix, then deflated.
inline std::vector<double> power_deflation_eigs(const Matrix& m) {
  using namespace detail;
  const std::size_t n = static_cast<std::size_t>(m.rows());
  long double shift = static_cast<long double>(m.norm()) + 1.0L;
  LMat b = lmat(m);
  for (std::size_t i = 0; i < n; ++i) b[i][i] += shift;

  std::vector<LVec> found;
  std::vector<long double> values;
  for (std::size_t j = 0; j < n; ++j) {
    if (j + 1 == n) {
      // Last eigenvalue from the trace of the deflated matrix.
      long double tr = 0.0L;
      for (std::size_t i = 0; i < n; ++i) tr += b[i][i];
      LVec v(n, 0.0L);
      // Remaining direction: orthogonal complement of the found set.
      for (std::size_t i = 0; i < n; ++i) {
        LVec probe(n, 0.0L);
        probe[i] = 1.0L;
        orthogonalize(probe, found);
        if (ldot(probe, probe) > ldot(v, v)) v = probe;
      }
      lnormalize(v);
      values.push_back(ldot(v, lmatvec(b, v)));
      break;
    }
    LMat p = b;
    lscale(p, 1.0L / lfrob(p));
    for (int squarings = 0; squarings < 60; ++squarings) {
      p = lmul(p, p);
      long double norm = lfrob(p);
      if (norm == 0.0L) break;
      lscale(p, 1.0L / norm);
    }
    // Strongest column of the limit projector.
    LVec v(n, 0.0L);
    long double best = -1.0L;
    for (std::size_t c = 0; c < n; ++c) {
      LVec col(n);
      for (std::size_t r = 0; r < n; ++r) col[r] = p[r][c];
      orthogonalize(col, found);
      long double norm = ldot(col, col);
      if (norm > best) {
        best = norm;
        v = col;
      }
    }
    lnormalize(v);
    for (int polish = 0; polish < 4; ++polish) {
      v = lmatvec(b, v);
      orthogonalize(v, found);
      lnormalize(v);
    }
    long double mu = ldot(v, lmatvec(b, v));
    values.push_back(mu);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) b[r][c] -= mu * v[r] * v[c];
    found.push_back(v);
  }

  std::vector<double> eigs;
  for (long double v : values) eigs.push_back(static_cast<double>(v - shift));
  std::sort(eigs.begin(), eigs.end(), std::greater<double>());
  return eigs;
}

inline std::vector<double> reference_eigs(const Matrix& m) {
  return m.rows() <= 3 ? charpoly_eigs(m) : power_deflation_eigs(m);
}

inline double scalar_frobenius(const Matrix& m) {
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

inline Matrix random_symmetric(loralab::Rng& rng, Index n, double scale = 1.0) {
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) {
      double v = scale * rng.next_gaussian();
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

inline Matrix random_psd(loralab::Rng& rng, Index n) {
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.next_gaussian();
  return g.transpose() * g;
}

// Multinomial logistic probe on raw features; full-batch gradient descent.
inline double linear_probe_accuracy(const std::vector<loralab::Sample>& train,
                                    const std::vector<loralab::Sample>& test,
                                    const std::vector<int>& classes, int iters = 300,
                                    double lr = 0.5) {
  const Index d = train.front().x.size();
  const std::size_t k = classes.size();
  std::vector<Vector> w(k, Vector::Zero(d + 1));  // trailing bias

  auto scores = [&](const Vector& x) {
    Vector s(static_cast<Index>(k));
    for (std::size_t c = 0; c < k; ++c) s[static_cast<Index>(c)] = w[c].head(d).dot(x) + w[c][d];
    return s;
  };
  auto label_index = [&](int label) {
    return static_cast<std::size_t>(
        std::find(classes.begin(), classes.end(), label) - classes.begin());
  };

  double inv_n = 1.0 / static_cast<double>(train.size());
  for (int it = 0; it < iters; ++it) {
    std::vector<Vector> grad(k, Vector::Zero(d + 1));
    for (const auto& s : train) {
      Vector sc = scores(s.x);
      Vector p = (sc.array() - sc.maxCoeff()).exp();
      p /= p.sum();
      p[static_cast<Index>(label_index(s.label))] -= 1.0;
      for (std::size_t c = 0; c < k; ++c) {
        grad[c].head(d) += p[static_cast<Index>(c)] * s.x * inv_n;
        grad[c][d] += p[static_cast<Index>(c)] * inv_n;
      }
    }
    for (std::size_t c = 0; c < k; ++c) w[c] -= lr * grad[c];
  }

  long correct = 0;
  for (const auto& s : test) {
    Vector sc = scores(s.x);
    Index best = 0;
    sc.maxCoeff(&best);
    if (classes[static_cast<std::size_t>(best)] == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace oracles
