#include "loralab/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

namespace loralab {

double cross_entropy(const Vector& logits, Index label_index, Vector* grad_logits) {
  if (label_index < 0 || label_index >= logits.size())
    throw ContractViolation("cross_entropy: label outside logit index set");
  double max_logit = logits.maxCoeff();
  Vector shifted = logits.array() - max_logit;
  Vector ex = shifted.array().exp();
  double denom = ex.sum();
  double loss = std::log(denom) - shifted[label_index];
  if (grad_logits) {
    *grad_logits = ex / denom;
    (*grad_logits)[label_index] -= 1.0;
  }
  return loss;
}

double cross_entropy(const Vector& logits, const std::vector<int>& classes, int label) {
  auto it = std::lower_bound(classes.begin(), classes.end(), label);
  if (it == classes.end() || *it != label)
    throw ContractViolation("cross_entropy: label " + std::to_string(label) +
                            " outside class set");
  return cross_entropy(logits, static_cast<Index>(it - classes.begin()));
}

double feature_distill_loss(const ActivationTrace& prev, const ActivationTrace& cur,
                            const std::vector<int>& layers, bool normalize,
                            std::vector<Vector>* grad_z_cur) {
  if (layers.empty()) throw ContractViolation("feature_distill_loss: empty layer set");
  const Index layer_count = static_cast<Index>(cur.z.size()) - 1;
  const double d = static_cast<double>(cur.z[0].size());
  const double inv_layers = 1.0 / static_cast<double>(layers.size());

  double loss = 0.0;
  for (int l : layers) {
    if (l < 1 || l > layer_count)
      throw ContractViolation("feature_distill_loss: layer index out of range");
    const Vector& zp = prev.z[static_cast<std::size_t>(l)];
    const Vector& zc = cur.z[static_cast<std::size_t>(l)];
    if (normalize) {
      double np = std::max(zp.norm(), kCosineEpsilon);
      double nc = std::max(zc.norm(), kCosineEpsilon);
      Vector chat = zc / nc;
      Vector v = zp / np - chat;
      double val = v.squaredNorm() / d;
      loss += huber(val);
      if (grad_z_cur) {
        double coeff = huber_prime(val) * inv_layers * (-2.0 / d);
        Vector gchat = coeff * v;
        if (zc.norm() > kCosineEpsilon)
          (*grad_z_cur)[static_cast<std::size_t>(l)] += (gchat - chat * chat.dot(gchat)) / nc;
        else
          (*grad_z_cur)[static_cast<std::size_t>(l)] += gchat / kCosineEpsilon;
      }
    } else {
      Vector v = zp - zc;
      double val = v.squaredNorm() / d;
      loss += huber(val);
      if (grad_z_cur) {
        double coeff = huber_prime(val) * inv_layers * (-2.0 / d);
        (*grad_z_cur)[static_cast<std::size_t>(l)] += coeff * v;
      }
    }
  }
  return loss * inv_layers;
}

ClassStats fit_class_stats(int class_id, const std::vector<Vector>& features,
                           double shrinkage) {
  if (features.empty()) throw ContractViolation("fit_class_stats: empty class");
  const Index d = features.front().size();
  ClassStats stats;
  stats.class_id = class_id;
  stats.count = static_cast<Index>(features.size());

  Vector mean = Vector::Zero(d);
  for (const Vector& f : features) mean += f;
  mean /= static_cast<double>(features.size());
  stats.mean = mean;

  Matrix cov = Matrix::Zero(d, d);
  if (features.size() > 1) {
    for (const Vector& f : features) {
      Vector c = f - mean;
      cov.noalias() += c * c.transpose();
    }
    cov /= static_cast<double>(features.size() - 1);
  }
  // Trace-relative shrinkage; degenerate classes fall back to unit scale so
  // the floor never vanishes.
  double scale = cov.trace() / static_cast<double>(d);
  if (!(scale > 0.0)) scale = 1.0;
  stats.floor = shrinkage * scale;
  stats.covariance = cov + stats.floor * Matrix::Identity(d, d);
  return stats;
}

void recalibrate_classifier(Backbone& net, const std::map<int, ClassStats>& stats,
                            int samples_per_class, int epochs, double lr, int batch_size,
                            Rng& rng) {
  if (stats.empty()) throw ContractViolation("recalibrate_classifier: no class stats");
  if (epochs <= 0 || samples_per_class <= 0) return;
  if (batch_size < 1) throw ContractViolation("recalibrate_classifier: bad batch size");

  std::vector<int> classes;
  for (const auto& [id, s] : stats) {
    if (net.heads().find(id) == net.heads().end())
      throw ContractViolation("recalibrate_classifier: no head for class " + std::to_string(id));
    classes.push_back(id);
  }

  // Pseudo-features u ~ N(mu, Sigma) via the Cholesky factor.
  std::vector<std::pair<Vector, Index>> pseudo;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const ClassStats& s = stats.at(classes[ci]);
    Eigen::LLT<Matrix> llt(s.covariance);
    if (llt.info() != Eigen::Success)
      throw NumericalError("recalibrate_classifier: covariance not positive definite for class " +
                           std::to_string(s.class_id));
    Matrix chol = llt.matrixL();
    const Index d = s.mean.size();
    for (int i = 0; i < samples_per_class; ++i) {
      Vector g(d);
      for (Index k = 0; k < d; ++k) g[k] = rng.next_gaussian();
      pseudo.emplace_back(s.mean + chol * g, static_cast<Index>(ci));
    }
  }

  std::vector<std::size_t> order(pseudo.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      double inv_n = 1.0 / static_cast<double>(end - start);
      std::vector<Vector> ghead(classes.size());
      for (std::size_t i = 0; i < classes.size(); ++i)
        ghead[i] = Vector::Zero(net.config().width);

      for (std::size_t k = start; k < end; ++k) {
        const auto& [u, label] = pseudo[order[k]];
        Vector logits(static_cast<Index>(classes.size()));
        for (std::size_t i = 0; i < classes.size(); ++i)
          logits[static_cast<Index>(i)] = u.dot(net.heads().at(classes[i]));
        Vector glogits;
        cross_entropy(logits, label, &glogits);
        glogits *= inv_n;
        for (std::size_t i = 0; i < classes.size(); ++i)
          ghead[i].noalias() += glogits[static_cast<Index>(i)] * u;
      }
      for (std::size_t i = 0; i < classes.size(); ++i)
        net.heads().at(classes[i]) -= lr * ghead[i];
    }
  }
}

TaskObjective::TaskObjective(const Backbone& net, int task, std::vector<Sample> batch,
                             AlignmentConfig alignment, double lambda)
    : net_(&net),
      task_(task),
      batch_(std::move(batch)),
      align_(std::move(alignment)),
      lambda_(lambda) {
  if (task < 1 || task > net.newest_task())
    throw ContractViolation("TaskObjective: task adapter missing");
  if (batch_.empty()) throw ContractViolation("TaskObjective: empty batch");
  if (lambda_ < 0.0) throw ContractViolation("TaskObjective: lambda must be non-negative");
  align_.validate(net.config().layers);

  d_ = net.config().width;
  layers_ = net.config().layers;
  rank_ = net.config().adapter_rank;
  targets_ = net.config().resolved_targets();
  subset_ = align_.resolved_subset(layers_);
  w_prev_ = net.effective_stack(task_ - 1);
  align_active_ = lambda_ > 0.0 && align_.strategy != AlignStrategy::none;

  for (const Sample& s : batch_) classes_.push_back(s.label);
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  for (int c : classes_)
    if (net.heads().find(c) == net.heads().end())
      throw ContractViolation("TaskObjective: no head for class " + std::to_string(c));

  params_total_ = static_cast<Index>(targets_.size()) * (2 * rank_ * d_) +
                  static_cast<Index>(classes_.size()) * d_;
}

Vector TaskObjective::initial_params() const {
  Vector params(params_total_);
  Index at = 0;
  const TaskAdapter& ad = net_->adapter(task_);
  for (int layer : targets_) {
    const Matrix& a = ad.a.at(layer);
    const Matrix& b = ad.b.at(layer);
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = 0; j < a.cols(); ++j) params[at++] = a(i, j);
    for (Index i = 0; i < b.rows(); ++i)
      for (Index j = 0; j < b.cols(); ++j) params[at++] = b(i, j);
  }
  for (int c : classes_) {
    const Vector& w = net_->heads().at(c);
    for (Index i = 0; i < d_; ++i) params[at++] = w[i];
  }
  return params;
}

void TaskObjective::write_params(const Vector& params, Backbone& net) const {
  if (params.size() != params_total_)
    throw ContractViolation("write_params: size mismatch");
  Index at = 0;
  TaskAdapter& ad = net.adapter(task_);
  for (int layer : targets_) {
    Matrix& a = ad.a.at(layer);
    Matrix& b = ad.b.at(layer);
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = 0; j < a.cols(); ++j) a(i, j) = params[at++];
    for (Index i = 0; i < b.rows(); ++i)
      for (Index j = 0; j < b.cols(); ++j) b(i, j) = params[at++];
  }
  for (int c : classes_) {
    Vector& w = net.heads().at(c);
    for (Index i = 0; i < d_; ++i) w[i] = params[at++];
  }
}

TaskObjective::Evaluation TaskObjective::compute(const Vector& params, bool with_grad) const {
  if (params.size() != params_total_)
    throw ContractViolation("TaskObjective: parameter vector size mismatch");

  // Materialize the trainable state from the flat parameter vector.
  std::vector<Matrix> adapter_a, adapter_b;
  std::vector<Matrix> w_cur = w_prev_;
  Index at = 0;
  for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
    Matrix a(rank_, d_), b(d_, rank_);
    for (Index i = 0; i < rank_; ++i)
      for (Index j = 0; j < d_; ++j) a(i, j) = params[at++];
    for (Index i = 0; i < d_; ++i)
      for (Index j = 0; j < rank_; ++j) b(i, j) = params[at++];
    w_cur[static_cast<std::size_t>(targets_[ti] - 1)].noalias() += b * a;
    adapter_a.push_back(std::move(a));
    adapter_b.push_back(std::move(b));
  }
  std::vector<Vector> heads;
  for (std::size_t ci = 0; ci < classes_.size(); ++ci) {
    Vector w(d_);
    for (Index i = 0; i < d_; ++i) w[i] = params[at++];
    heads.push_back(std::move(w));
  }

  const std::size_t n = batch_.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool need_prev = align_active_;

  std::vector<ActivationTrace> cur(n), prev(n);
  std::vector<Vector> glogits(n);
  std::vector<RelationMatrix> r_prev, r_cur;
  std::vector<std::vector<Vector>> feature_gz;

  Evaluation out;
  out.parts.lambda_effective = lambda_;

  double ce_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = batch_[i];
    ActivationTrace trace;
    trace.horizon = task_;
    trace.classes = classes_;
    trace.z.resize(static_cast<std::size_t>(layers_) + 1);
    trace.h.resize(static_cast<std::size_t>(layers_) + 1);
    trace.z[0] = net_->embedding() * s.x;
    for (Index l = 1; l <= layers_; ++l) {
      Vector u = w_cur[static_cast<std::size_t>(l - 1)] * trace.z[static_cast<std::size_t>(l - 1)] +
                 net_->bias(static_cast<int>(l));
      trace.h[static_cast<std::size_t>(l)] = u.array().tanh();
      trace.z[static_cast<std::size_t>(l)] =
          trace.z[static_cast<std::size_t>(l - 1)] + trace.h[static_cast<std::size_t>(l)];
    }
    if (!trace.z[static_cast<std::size_t>(layers_)].allFinite())
      throw NumericalError("TaskObjective: non-finite activation in current forward");

    trace.logits.resize(static_cast<Index>(classes_.size()));
    const Vector& top = trace.z[static_cast<std::size_t>(layers_)];
    for (std::size_t ci = 0; ci < classes_.size(); ++ci)
      trace.logits[static_cast<Index>(ci)] = top.dot(heads[ci]);

    auto label_it = std::lower_bound(classes_.begin(), classes_.end(), s.label);
    if (label_it == classes_.end() || *label_it != s.label)
      throw ContractViolation("TaskObjective: label outside current task classes");
    Index label = static_cast<Index>(label_it - classes_.begin());
    ce_sum += cross_entropy(trace.logits, label, with_grad ? &glogits[i] : nullptr);
    cur[i] = std::move(trace);

    if (need_prev) {
      prev[i] = net_->forward_with(w_prev_, s.x, task_ - 1, {});
      if (align_.uses_relations()) {
        RelationMatrix rp = relation_matrix(prev[i], align_.phi, subset_);
        RelationMatrix rc = relation_matrix(cur[i], align_.phi, subset_);
        rp.sample_id = static_cast<long>(i);
        rc.sample_id = static_cast<long>(i);
        r_prev.push_back(std::move(rp));
        r_cur.push_back(std::move(rc));
      }
    }
  }
  if (!std::isfinite(ce_sum))
    throw NumericalError("TaskObjective: non-finite cross-entropy");
  out.parts.ce = ce_sum * inv_n;

  // Alignment value and per-sample adjoints, per strategy.
  std::vector<Matrix> r_grads;     // dAlign/dR_cur per sample
  std::vector<std::vector<Vector>> f_grads;  // dAlign/dz_cur per sample
  double align_value = 0.0;
  if (align_active_) {
    switch (align_.strategy) {
      case AlignStrategy::eigen: {
        if (with_grad) r_grads.resize(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          sum += sv_align_loss(r_prev[i], r_cur[i], with_grad ? &r_grads[i] : nullptr);
        align_value = sum * inv_n;
        if (with_grad)
          for (Matrix& g : r_grads) g *= inv_n;
        break;
      }
      case AlignStrategy::p2p: {
        if (with_grad) r_grads.resize(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          sum += p2p_loss(r_prev[i], r_cur[i], with_grad ? &r_grads[i] : nullptr);
        align_value = sum * inv_n;
        if (with_grad)
          for (Matrix& g : r_grads) g *= inv_n;
        break;
      }
      case AlignStrategy::b_eigen: {
        align_value = batch_eigen_loss(r_prev, r_cur, with_grad ? &r_grads : nullptr);
        break;
      }
      case AlignStrategy::feature_last:
      case AlignStrategy::feature_all: {
        std::vector<int> layers = subset_;
        if (align_.strategy == AlignStrategy::feature_last) layers = {subset_.back()};
        if (with_grad)
          f_grads.assign(n, std::vector<Vector>(static_cast<std::size_t>(layers_) + 1,
                                                Vector::Zero(d_)));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          sum += feature_distill_loss(prev[i], cur[i], layers, align_.normalize_features,
                                      with_grad ? &f_grads[i] : nullptr);
        align_value = sum * inv_n;
        if (with_grad)
          for (auto& gz : f_grads)
            for (Vector& g : gz) g *= inv_n;
        break;
      }
      case AlignStrategy::none:
        break;
    }
    if (!std::isfinite(align_value))
      throw NumericalError("TaskObjective: non-finite alignment loss");
  }
  out.parts.align = align_value;
  out.parts.total = out.parts.ce + out.parts.lambda_effective * out.parts.align;

  if (!with_grad) return out;

  out.gradient = Vector::Zero(params_total_);
  std::vector<Matrix> gw(targets_.size(), Matrix::Zero(d_, d_));
  std::vector<Vector> ghead(classes_.size(), Vector::Zero(d_));

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Vector> gz(static_cast<std::size_t>(layers_) + 1, Vector::Zero(d_));

    // Cross-entropy seeds at z^L and the heads.
    const Vector& top = cur[i].z[static_cast<std::size_t>(layers_)];
    Vector gl = glogits[i] * inv_n;
    for (std::size_t ci = 0; ci < classes_.size(); ++ci) {
      gz[static_cast<std::size_t>(layers_)].noalias() += gl[static_cast<Index>(ci)] * heads[ci];
      ghead[ci].noalias() += gl[static_cast<Index>(ci)] * top;
    }

    if (align_active_) {
      double scale = out.parts.lambda_effective;
      if (align_.uses_relations()) {
        Matrix g = r_grads[i] * scale;
        relation_backward(cur[i], align_.phi, subset_, g, gz);
      } else if (align_.uses_features()) {
        for (std::size_t l = 0; l < gz.size(); ++l)
          gz[l].noalias() += scale * f_grads[i][l];
      }
    }

    for (Index l = layers_; l >= 1; --l) {
      const Vector& h = cur[i].h[static_cast<std::size_t>(l)];
      Vector gu = (1.0 - h.array().square()).matrix().cwiseProduct(gz[static_cast<std::size_t>(l)]);
      auto target_it = std::find(targets_.begin(), targets_.end(), static_cast<int>(l));
      if (target_it != targets_.end()) {
        std::size_t ti = static_cast<std::size_t>(target_it - targets_.begin());
        gw[ti].noalias() += gu * cur[i].z[static_cast<std::size_t>(l - 1)].transpose();
      }
      gz[static_cast<std::size_t>(l - 1)].noalias() +=
          gz[static_cast<std::size_t>(l)] + w_cur[static_cast<std::size_t>(l - 1)].transpose() * gu;
    }
  }

  // Chain W = W_prev + B A into the adapter blocks, then pack.
  at = 0;
  for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
    Matrix ga = adapter_b[ti].transpose() * gw[ti];
    Matrix gb = gw[ti] * adapter_a[ti].transpose();
    for (Index i = 0; i < rank_; ++i)
      for (Index j = 0; j < d_; ++j) out.gradient[at++] = ga(i, j);
    for (Index i = 0; i < d_; ++i)
      for (Index j = 0; j < rank_; ++j) out.gradient[at++] = gb(i, j);
  }
  for (std::size_t ci = 0; ci < classes_.size(); ++ci)
    for (Index k = 0; k < d_; ++k) out.gradient[at++] = ghead[ci][k];

  if (!out.gradient.allFinite())
    throw NumericalError("TaskObjective: non-finite gradient in backward pass");
  return out;
}

double TaskObjective::eval(const Vector& params) const {
  return compute(params, false).parts.total;
}

GradRecord TaskObjective::eval_with_grad(const Vector& params) const {
  Evaluation e = compute(params, true);
  return {e.parts.total, std::move(e.gradient)};
}

LossBreakdown TaskObjective::breakdown(const Vector& params) const {
  return compute(params, false).parts;
}

LossBreakdown TaskObjective::breakdown_with_grad(const Vector& params, Vector& grad_out) const {
  Evaluation e = compute(params, true);
  grad_out = std::move(e.gradient);
  return e.parts;
}

void TaskObjective::relation_pairs(const Vector& params, std::vector<RelationMatrix>& prev_out,
                                   std::vector<RelationMatrix>& cur_out) const {
  prev_out.clear();
  cur_out.clear();
  if (!align_.uses_relations()) return;

  std::vector<Matrix> w_cur = w_prev_;
  Index at = 0;
  for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
    Matrix a(rank_, d_), b(d_, rank_);
    for (Index i = 0; i < rank_; ++i)
      for (Index j = 0; j < d_; ++j) a(i, j) = params[at++];
    for (Index i = 0; i < d_; ++i)
      for (Index j = 0; j < rank_; ++j) b(i, j) = params[at++];
    w_cur[static_cast<std::size_t>(targets_[ti] - 1)].noalias() += b * a;
  }
  for (const Sample& s : batch_) {
    ActivationTrace tp = net_->forward_with(w_prev_, s.x, task_ - 1, {});
    ActivationTrace tc = net_->forward_with(w_cur, s.x, task_, {});
    prev_out.push_back(relation_matrix(tp, align_.phi, subset_));
    cur_out.push_back(relation_matrix(tc, align_.phi, subset_));
  }
}

LossBreakdown total_loss(const Backbone& net, const std::vector<Sample>& batch,
                         const AlignmentConfig& alignment, double lambda, int task) {
  TaskObjective obj(net, task, batch, alignment, lambda);
  return obj.breakdown(obj.initial_params());
}

}  // namespace loralab
