#include "loralab/relation.hpp"

#include <algorithm>
#include <cmath>

namespace loralab {

void AlignmentConfig::validate(Index layers) const {
  if (huber_delta != 1.0)
    throw ConfigError("alignment.huber_delta", "fixed at 1");
  if ((uses_relations() || uses_features()) && !layer_subset.empty()) {
    for (int l : layer_subset)
      if (l < 1 || l > layers)
        throw ConfigError("alignment.layer_subset", "layer index out of range");
  }
}

std::vector<int> AlignmentConfig::resolved_subset(Index layers) const {
  if (!layer_subset.empty()) {
    std::vector<int> s = layer_subset;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }
  std::vector<int> all(static_cast<std::size_t>(layers));
  for (Index l = 0; l < layers; ++l) all[static_cast<std::size_t>(l)] = static_cast<int>(l) + 1;
  return all;
}

double huber(double delta) {
  double a = std::abs(delta);
  return a < 1.0 ? 0.5 * delta * delta : a - 0.5;
}

double huber_prime(double delta) {
  if (delta > 1.0) return 1.0;
  if (delta < -1.0) return -1.0;
  return delta;
}

RelationMatrix relation_matrix(const ActivationTrace& trace, Phi phi,
                               const std::vector<int>& subset) {
  const Index layers = static_cast<Index>(trace.z.size()) - 1;
  if (subset.empty()) throw ContractViolation("relation_matrix: empty layer subset");
  for (int l : subset)
    if (l < 1 || l > layers)
      throw ContractViolation("relation_matrix: layer index out of range (z^0 excluded)");

  const Index n = static_cast<Index>(subset.size());
  RelationMatrix rel;
  rel.phi = phi;
  rel.horizon = trace.horizon;
  rel.entries.resize(n, n);

  std::vector<double> norms(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    norms[static_cast<std::size_t>(i)] = trace.z[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])].norm();

  for (Index i = 0; i < n; ++i) {
    const Vector& zi = trace.z[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])];
    for (Index j = i; j < n; ++j) {
      const Vector& zj = trace.z[static_cast<std::size_t>(subset[static_cast<std::size_t>(j)])];
      double dot = zi.dot(zj);
      double value;
      if (phi == Phi::inner) {
        value = dot;
      } else {
        double denom = norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)];
        if (denom <= kCosineEpsilon) {
          value = dot / kCosineEpsilon;
          ++rel.zero_norm_states;
        } else {
          value = dot / denom;
        }
      }
      rel.entries(i, j) = value;
      rel.entries(j, i) = value;
    }
  }
  return rel;
}

namespace {

void require_match(const RelationMatrix& a, const RelationMatrix& b, const char* who) {
  if (a.entries.rows() != b.entries.rows() || a.entries.cols() != b.entries.cols())
    throw ContractViolation(std::string(who) + ": shape mismatch");
  if (a.phi != b.phi) throw ContractViolation(std::string(who) + ": phi mismatch");
}

}  // namespace

double sv_align_loss(const RelationMatrix& prev, const RelationMatrix& cur, Matrix* grad_cur) {
  require_match(prev, cur, "sv_align_loss");
  const Index n = cur.entries.rows();
  Vector sv_prev = singular_values(prev.entries);
  SingularSpectrum cur_spec = singular_spectrum(cur.entries);

  double loss = 0.0;
  if (grad_cur) grad_cur->setZero(n, n);
  for (Index i = 0; i < n; ++i) {
    double delta = sv_prev[i] - cur_spec.values[i];
    loss += huber(delta);
    if (grad_cur) {
      double coeff = -huber_prime(delta) * cur_spec.signs[i] / static_cast<double>(n);
      if (coeff != 0.0)
        grad_cur->noalias() += coeff * cur_spec.vectors.col(i) * cur_spec.vectors.col(i).transpose();
    }
  }
  return loss / static_cast<double>(n);
}

double p2p_loss(const RelationMatrix& prev, const RelationMatrix& cur, Matrix* grad_cur) {
  require_match(prev, cur, "p2p_loss");
  const Index n = cur.entries.rows();
  const double inv = 1.0 / static_cast<double>(n * n);
  double loss = 0.0;
  if (grad_cur) grad_cur->setZero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      double delta = prev.entries(i, j) - cur.entries(i, j);
      loss += huber(delta);
      if (grad_cur) (*grad_cur)(i, j) = -huber_prime(delta) * inv;
    }
  }
  return loss * inv;
}

double batch_eigen_loss(const std::vector<RelationMatrix>& prev,
                        const std::vector<RelationMatrix>& cur,
                        std::vector<Matrix>* grad_cur) {
  if (prev.empty() || cur.empty() || prev.size() != cur.size())
    throw ContractViolation("batch_eigen_loss: empty or mismatched batch");
  RelationMatrix mean_prev = prev.front();
  RelationMatrix mean_cur = cur.front();
  for (std::size_t i = 1; i < prev.size(); ++i) {
    require_match(prev[i], mean_prev, "batch_eigen_loss");
    require_match(cur[i], mean_cur, "batch_eigen_loss");
    mean_prev.entries += prev[i].entries;
    mean_cur.entries += cur[i].entries;
  }
  double inv_n = 1.0 / static_cast<double>(prev.size());
  mean_prev.entries *= inv_n;
  mean_cur.entries *= inv_n;

  Matrix grad_mean;
  double loss = sv_align_loss(mean_prev, mean_cur, grad_cur ? &grad_mean : nullptr);
  if (grad_cur) {
    grad_cur->assign(cur.size(), grad_mean * inv_n);
  }
  return loss;
}

double relation_drift(const RelationMatrix& a, const RelationMatrix& b) {
  require_match(a, b, "relation_drift");
  return (a.entries - b.entries).norm();
}

WeylReport weyl_check(const Matrix& r, const Matrix& e) {
  if (r.rows() != e.rows() || r.cols() != e.cols())
    throw ContractViolation("weyl_check: shape mismatch");
  Vector sv_r = singular_values(r);
  Vector sv_p = singular_values(r + e);
  WeylReport report;
  report.e_norm = e.norm();
  for (Index i = 0; i < sv_r.size(); ++i)
    report.max_shift = std::max(report.max_shift, std::abs(sv_p[i] - sv_r[i]));
  report.holds = report.max_shift <= report.e_norm + 1e-9;
  return report;
}

void relation_backward(const ActivationTrace& trace, Phi phi, const std::vector<int>& subset,
                       const Matrix& grad_entries, std::vector<Vector>& grad_z) {
  const Index n = static_cast<Index>(subset.size());
  if (grad_entries.rows() != n || grad_entries.cols() != n)
    throw ContractViolation("relation_backward: adjoint shape mismatch");

  std::vector<const Vector*> zs(static_cast<std::size_t>(n));
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    zs[static_cast<std::size_t>(i)] = &trace.z[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])];
    norms[static_cast<std::size_t>(i)] = zs[static_cast<std::size_t>(i)]->norm();
  }

  for (Index i = 0; i < n; ++i) {
    Vector acc = Vector::Zero(zs[0]->size());
    const Vector& zi = *zs[static_cast<std::size_t>(i)];
    double ni = norms[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      // Entry (i,j) through its first slot plus entry (j,i) through its
      // second slot; both equal d phi(z_i, z_j) / d z_i.
      double g = grad_entries(i, j) + grad_entries(j, i);
      if (g == 0.0) continue;
      const Vector& zj = *zs[static_cast<std::size_t>(j)];
      if (phi == Phi::inner) {
        acc.noalias() += g * zj;
      } else {
        double nj = norms[static_cast<std::size_t>(j)];
        double denom = ni * nj;
        if (denom <= kCosineEpsilon) {
          acc.noalias() += (g / kCosineEpsilon) * zj;
        } else {
          double value = zi.dot(zj) / denom;
          acc.noalias() += (g / denom) * zj;
          acc.noalias() -= (g * value / (ni * ni)) * zi;
        }
      }
    }
    grad_z[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])] += acc;
  }
}

RelationDiag relation_diag(const RelationMatrix& r) {
  Vector sv = singular_values(r.entries);
  RelationDiag diag;
  diag.min_singular = sv.size() ? sv[sv.size() - 1] : 0.0;
  diag.min_gap = min_spectral_gap(sv);
  return diag;
}

}  // namespace loralab
