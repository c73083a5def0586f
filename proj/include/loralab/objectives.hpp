#pragma once

#include <map>
#include <vector>

#include "loralab/backbone.hpp"
#include "loralab/grad.hpp"
#include "loralab/relation.hpp"
#include "loralab/stream.hpp"

namespace loralab {

struct LossBreakdown {
  double ce = 0.0;
  double align = 0.0;
  double total = 0.0;
  double lambda_effective = 0.0;
};

/// -log softmax[label_index]; optional logit gradient (softmax - onehot).
double cross_entropy(const Vector& logits, Index label_index, Vector* grad_logits = nullptr);

/// Class-id flavor: label must appear in `classes` (ascending, aligned with
/// the logit order).
double cross_entropy(const Vector& logits, const std::vector<int>& classes, int label);

/// Mean over selected layers of huber(||zp - zc||^2 / d), with both states
/// unit-normalized when `normalize` is set. Gradient flows through the
/// current trace only; accumulated into grad_z_cur (0..L) when non-null.
double feature_distill_loss(const ActivationTrace& prev, const ActivationTrace& cur,
                            const std::vector<int>& layers, bool normalize,
                            std::vector<Vector>* grad_z_cur = nullptr);

/// Per-class Gaussian statistics of final-layer features, with trace-scaled
/// shrinkage so the covariance stays safely positive definite.
struct ClassStats {
  int class_id = 0;
  Vector mean;
  Matrix covariance;  // after shrinkage
  Index count = 0;
  double floor = 0.0;  // shrinkage added to every eigenvalue
};

ClassStats fit_class_stats(int class_id, const std::vector<Vector>& features,
                           double shrinkage = 1e-4);

/// Refits every head in `stats` by cross-entropy over pseudo-features drawn
/// from the class Gaussians (Cholesky sampling). Touches heads only.
void recalibrate_classifier(Backbone& net, const std::map<int, ClassStats>& stats,
                            int samples_per_class, int epochs, double lr, int batch_size,
                            Rng& rng);

/// Spectral and Huber-breakpoint conditioning of an objective evaluation.
/// Gradient verification excludes configurations where any of these margins
/// is small: sorted-eigenvalue ties and the Huber curvature jump at |x| = 1
/// are subgradient points central differences cannot probe.
struct GradcheckDiag {
  double min_gap = 0.0;
  double min_singular = 0.0;
  double huber_margin = 0.0;
};

/// Differentiable total objective for one task over a fixed batch:
/// total = CE + lambda * align, with the align branch dispatched on the
/// alignment strategy. CE logits range over the full task label set.
/// Parameters are the task adapter (A then B per targeted layer, ascending)
/// followed by the current-task heads (ascending class id).
class TaskObjective : public DiffObjective {
 public:
  TaskObjective(const Backbone& net, int task, std::vector<Sample> batch,
                std::vector<int> task_classes, AlignmentConfig alignment, double lambda);
  /// Convenience: the task label set is taken from the batch labels.
  TaskObjective(const Backbone& net, int task, std::vector<Sample> batch,
                AlignmentConfig alignment, double lambda);

  Index param_count() const override { return params_total_; }
  double eval(const Vector& params) const override;
  GradRecord eval_with_grad(const Vector& params) const override;

  LossBreakdown breakdown(const Vector& params) const;
  /// Breakdown and gradient in one pass; the training-step workhorse.
  LossBreakdown breakdown_with_grad(const Vector& params, Vector& grad_out) const;
  Vector initial_params() const;
  void write_params(const Vector& params, Backbone& net) const;

  const std::vector<int>& train_classes() const { return classes_; }
  /// Relation matrices (previous and current model) for every batch sample
  /// at the given parameters; empty unless the strategy uses relations.
  void relation_pairs(const Vector& params, std::vector<RelationMatrix>& prev,
                      std::vector<RelationMatrix>& cur) const;
  GradcheckDiag gradcheck_diag(const Vector& params) const;

 private:
  struct Evaluation {
    LossBreakdown parts;
    Vector gradient;
  };
  Evaluation compute(const Vector& params, bool with_grad) const;
  std::vector<Matrix> materialize_weights(const Vector& params, std::vector<Matrix>* a_out,
                                          std::vector<Matrix>* b_out) const;

  const Backbone* net_;
  int task_;
  std::vector<Sample> batch_;
  AlignmentConfig align_;
  double lambda_;
  bool align_active_;
  std::vector<int> targets_;
  std::vector<int> classes_;
  std::vector<int> subset_;
  std::vector<Matrix> w_prev_;
  Index d_, layers_, rank_;
  Index params_total_;
};

/// One-shot evaluation at the backbone's current parameters.
LossBreakdown total_loss(const Backbone& net, const std::vector<Sample>& batch,
                         const AlignmentConfig& alignment, double lambda, int task);

}  // namespace loralab
