#pragma once

#include <vector>

#include "loralab/backbone.hpp"
#include "loralab/linalg.hpp"

namespace loralab {

enum class Phi { cosine, inner };

enum class AlignStrategy { eigen, b_eigen, p2p, feature_last, feature_all, none };

/// Guard for zero-norm layer states under cosine: entries are
/// dot / max(|a||b|, eps), which keeps the diagonal exactly 1 and the
/// matrix an exact Gram of unit vectors whenever norms exceed sqrt(eps).
constexpr double kCosineEpsilon = 1e-8;

struct AlignmentConfig {
  AlignStrategy strategy = AlignStrategy::eigen;
  bool normalize_features = true;
  Phi phi = Phi::cosine;
  std::vector<int> layer_subset;  // 1-based; empty = all layers
  double huber_delta = 1.0;       // fixed at 1

  void validate(Index layers) const;
  std::vector<int> resolved_subset(Index layers) const;
  bool uses_relations() const {
    return strategy == AlignStrategy::eigen || strategy == AlignStrategy::b_eigen ||
           strategy == AlignStrategy::p2p;
  }
  bool uses_features() const {
    return strategy == AlignStrategy::feature_last || strategy == AlignStrategy::feature_all;
  }
};

/// Symmetric similarity matrix among one sample's layer states z^1..z^L
/// (z^0 excluded); entry (a,b) = phi(z^{l_a}, z^{l_b}).
struct RelationMatrix {
  Matrix entries;
  Phi phi = Phi::cosine;
  int horizon = 0;
  long sample_id = -1;
  int zero_norm_states = 0;  // cosine eps-guard activations
};

/// Unit-threshold Huber: delta^2/2 inside |delta| < 1, |delta| - 1/2 outside.
double huber(double delta);
double huber_prime(double delta);

RelationMatrix relation_matrix(const ActivationTrace& trace, Phi phi,
                               const std::vector<int>& subset);

/// Mean over spectrum indices of huber(sv_l(prev) - sv_l(cur)), values
/// paired by descending-sorted index. prev is a constant; if grad_cur is
/// non-null it receives dLoss/dCur via dsv_l/dR = sign_l v_l v_l^T.
double sv_align_loss(const RelationMatrix& prev, const RelationMatrix& cur,
                     Matrix* grad_cur = nullptr);

/// Mean over entries of huber(prev - cur); gradient through cur only.
double p2p_loss(const RelationMatrix& prev, const RelationMatrix& cur,
                Matrix* grad_cur = nullptr);

/// Entrywise batch averages per horizon, then sv_align_loss on the two
/// averages. grad_cur, when non-null, receives one gradient per sample.
double batch_eigen_loss(const std::vector<RelationMatrix>& prev,
                        const std::vector<RelationMatrix>& cur,
                        std::vector<Matrix>* grad_cur = nullptr);

/// Frobenius norm of the difference; phi and shapes must match.
double relation_drift(const RelationMatrix& a, const RelationMatrix& b);

struct WeylReport {
  double max_shift = 0.0;
  double e_norm = 0.0;
  bool holds = false;
};

/// Checks max_i |sv_i(r+e) - sv_i(r)| <= ||e||_F + 1e-9.
WeylReport weyl_check(const Matrix& r, const Matrix& e);

/// Accumulates dLoss/dz^l into grad_z (indexed 0..L) from the adjoint of
/// the relation entries. Only the current-model trace is differentiated.
void relation_backward(const ActivationTrace& trace, Phi phi, const std::vector<int>& subset,
                       const Matrix& grad_entries, std::vector<Vector>& grad_z);

/// Spectral conditioning of a relation pair, used to exclude
/// near-degenerate cases from gradient verification.
struct RelationDiag {
  double min_singular = 0.0;
  double min_gap = 0.0;
};
RelationDiag relation_diag(const RelationMatrix& r);

}  // namespace loralab
