#include "loralab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <vector>

namespace loralab {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double frobenius_norm(const Matrix& m) { return m.norm(); }

namespace {

double off_diagonal_norm(const Matrix& a) {
  double sum = 0.0;
  for (Index p = 0; p < a.rows(); ++p)
    for (Index q = 0; q < a.cols(); ++q)
      if (p != q) sum += a(p, q) * a(p, q);
  return std::sqrt(sum);
}

void require_symmetric(const Matrix& m) {
  if (m.rows() != m.cols())
    throw ContractViolation("eigh_sym: matrix must be square");
  double scale = std::max(1.0, m.norm());
  double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale)
    throw ContractViolation("eigh_sym: matrix asymmetric beyond 1e-12 relative");
}

Spectrum sort_descending(Vector values, Matrix vectors) {
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values[a] > values[b]; });
  Spectrum s;
  s.values.resize(values.size());
  s.vectors.resize(vectors.rows(), vectors.cols());
  for (Index i = 0; i < values.size(); ++i) {
    s.values[i] = values[order[i]];
    s.vectors.col(i) = vectors.col(order[i]);
  }
  return s;
}

}  // namespace

Spectrum eigh_sym(const Matrix& m) {
  require_symmetric(m);
  const Index n = m.rows();
  Matrix a = 0.5 * (m + m.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double stop = 1e-12 * m.norm();

  bool converged = off_diagonal_norm(a) <= stop;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (apq == 0.0) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        double tau = s / (1.0 + c);

        double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index r = 0; r < n; ++r) {
          if (r != p && r != q) {
            double arp = a(r, p), arq = a(r, q);
            a(r, p) = a(p, r) = arp - s * (arq + tau * arp);
            a(r, q) = a(q, r) = arq + s * (arp - tau * arq);
          }
          double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
    converged = off_diagonal_norm(a) <= stop;
  }
  if (!converged) {
    throw NumericalError("eigh_sym: no convergence after 100 sweeps, residual " +
                         format_real(off_diagonal_norm(a)));
  }
  return sort_descending(a.diagonal(), std::move(v));
}

Vector singular_values(const Matrix& m) {
  Vector values = eigh_sym(m).values.cwiseAbs();
  std::sort(values.data(), values.data() + values.size(), std::greater<double>());
  return values;
}

SingularSpectrum singular_spectrum(const Matrix& m) {
  Spectrum eig = eigh_sym(m);
  const Index n = eig.values.size();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(eig.values[a]) > std::abs(eig.values[b]);
  });
  SingularSpectrum s;
  s.values.resize(n);
  s.signs.resize(n);
  s.vectors.resize(eig.vectors.rows(), n);
  for (Index i = 0; i < n; ++i) {
    double lambda = eig.values[order[i]];
    s.values[i] = std::abs(lambda);
    s.signs[i] = lambda < 0.0 ? -1.0 : 1.0;
    s.vectors.col(i) = eig.vectors.col(order[i]);
  }
  return s;
}

double min_spectral_gap(const Vector& sorted_values) {
  if (sorted_values.size() < 2) return std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i + 1 < sorted_values.size(); ++i)
    gap = std::min(gap, std::abs(sorted_values[i] - sorted_values[i + 1]));
  return gap;
}

}  // namespace loralab
