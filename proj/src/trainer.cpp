#include "loralab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

namespace loralab {

void TrainConfig::validate(Index layers) const {
  if (epochs < 1) throw ConfigError("train.epochs", "must be positive");
  if (batch < 1) throw ConfigError("train.batch", "must be positive");
  if (lr <= 0.0) throw ConfigError("train.lr", "must be positive");
  if (lambda < 0.0) throw ConfigError("train.lambda", "must be non-negative");
  if (recalibration.enabled) {
    if (recalibration.samples_per_class < 1)
      throw ConfigError("train.recalibration.samples_per_class", "must be positive");
    if (recalibration.epochs < 0)
      throw ConfigError("train.recalibration.epochs", "must be non-negative");
    if (recalibration.lr <= 0.0) throw ConfigError("train.recalibration.lr", "must be positive");
    if (recalibration.batch < 1) throw ConfigError("train.recalibration.batch", "must be positive");
  }
  alignment.validate(layers);
}

double lambda_at(LambdaSchedule schedule, double base, int epoch, int total_epochs) {
  if (total_epochs < 1) throw ContractViolation("lambda_at: total epochs must be >= 1");
  if (epoch < 0 || epoch >= total_epochs) throw ContractViolation("lambda_at: epoch out of range");
  double x = total_epochs > 1
                 ? static_cast<double>(epoch) / static_cast<double>(total_epochs - 1)
                 : 0.0;
  switch (schedule) {
    case LambdaSchedule::constant:
      return base;
    case LambdaSchedule::cosine:
      return base * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
    case LambdaSchedule::exponential:
      return base * std::exp2(-4.0 * x);
    case LambdaSchedule::linear:
      return base * (1.0 - x);
  }
  throw ContractViolation("lambda_at: unknown schedule");
}

double lr_at(LrSchedule schedule, double base, int epoch, int total_epochs) {
  if (total_epochs < 1) throw ContractViolation("lr_at: total epochs must be >= 1");
  if (epoch < 0 || epoch >= total_epochs) throw ContractViolation("lr_at: epoch out of range");
  if (schedule == LrSchedule::constant) return base;
  // Anneals toward zero without reaching it on the final epoch.
  double x = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

void OptimizerState::reset(OptimizerKind k, Index size) {
  kind = k;
  step = 0;
  if (kind == OptimizerKind::adam) {
    m = Vector::Zero(size);
    v = Vector::Zero(size);
  } else {
    m.resize(0);
    v.resize(0);
  }
}

void OptimizerState::apply(Vector& params, const Vector& grad, double lr) {
  if (kind == OptimizerKind::sgd) {
    params -= lr * grad;
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  double bias1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double bias2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params -= (lr / bias1) * m.cwiseQuotient(((v / bias2).cwiseSqrt().array() + eps).matrix());
}

std::vector<Sample> probe_batch(const TaskData& task) {
  std::size_t n = std::min<std::size_t>(64, task.train.size());
  return {task.train.begin(), task.train.begin() + static_cast<std::ptrdiff_t>(n)};
}

namespace {

double train_accuracy(const Backbone& net, const std::vector<Matrix>& weights,
                      const TaskData& task, const std::vector<int>& classes, int t) {
  long correct = 0;
  for (const Sample& s : task.train) {
    ActivationTrace trace = net.forward_with(weights, s.x, t, classes);
    if (predicted_class(trace) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(task.train.size());
}

double probe_relation_drift(const Backbone& net, const std::vector<Sample>& probe,
                            const AlignmentConfig& align, int t) {
  if (probe.empty()) return 0.0;
  std::vector<int> all_layers;
  for (Index l = 1; l <= net.config().layers; ++l) all_layers.push_back(static_cast<int>(l));
  std::vector<Matrix> w_prev = net.effective_stack(t - 1);
  std::vector<Matrix> w_cur = net.effective_stack(t);
  double sum = 0.0;
  for (const Sample& s : probe) {
    ActivationTrace prev = net.forward_with(w_prev, s.x, t - 1, {});
    ActivationTrace cur = net.forward_with(w_cur, s.x, t, {});
    sum += relation_drift(relation_matrix(prev, align.phi, all_layers),
                          relation_matrix(cur, align.phi, all_layers));
  }
  return sum / static_cast<double>(probe.size());
}

}  // namespace

TaskLog train_task(Backbone& net, const TaskData& task, const TrainConfig& cfg, int t) {
  // Epoch count 0 is a valid no-op here (the adapter is still created);
  // config-level validation separately requires at least one epoch.
  if (cfg.epochs < 0) throw ContractViolation("train_task: negative epoch count");
  if (cfg.batch < 1) throw ContractViolation("train_task: batch size must be positive");
  if (cfg.lr <= 0.0) throw ContractViolation("train_task: learning rate must be positive");
  if (cfg.lambda < 0.0) throw ContractViolation("train_task: lambda must be non-negative");
  cfg.alignment.validate(net.config().layers);
  if (t != net.newest_task() + 1)
    throw ContractViolation("train_task: expected task " + std::to_string(net.newest_task() + 1));
  if (task.train.empty()) throw ContractViolation("train_task: task has no training data");

  Rng adapter_rng = Rng(cfg.seed, "init").substream(0xADA0ull + static_cast<std::uint64_t>(t));
  net.add_task_adapter(t, adapter_rng);

  // Fresh zero heads for the new classes.
  std::vector<int> classes = task.labels;
  std::sort(classes.begin(), classes.end());
  for (int c : classes) {
    if (net.heads().count(c))
      throw ContractViolation("train_task: class " + std::to_string(c) + " already seen");
    net.heads()[c] = Vector::Zero(net.config().width);
  }

  TaskLog log;
  log.task = t;

  std::vector<Sample> probe = probe_batch(task);
  Rng batch_rng = Rng(cfg.seed, "batch").substream(static_cast<std::uint64_t>(t));
  std::vector<std::size_t> order(task.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  OptimizerState opt;
  bool opt_ready = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lambda_eff = lambda_at(cfg.lambda_schedule, cfg.lambda, epoch, cfg.epochs);
    double lr = lr_at(cfg.lr_schedule, cfg.lr, epoch, cfg.epochs);
    batch_rng.shuffle(order);

    EpochLog elog;
    elog.lambda_effective = lambda_eff;
    long steps = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(task.train[order[k]]);

      TaskObjective objective(net, t, std::move(batch), cfg.alignment, lambda_eff);
      if (!opt_ready) {
        opt.reset(cfg.optimizer, objective.param_count());
        opt_ready = true;
      }
      Vector params = objective.initial_params();
      Vector grad;
      LossBreakdown parts;
      try {
        parts = objective.breakdown_with_grad(params, grad);
      } catch (const NumericalError& e) {
        throw NumericalError("train_task: task " + std::to_string(t) + " epoch " +
                             std::to_string(epoch) + " step " + std::to_string(steps) + ": " +
                             e.what());
      }
      opt.apply(params, grad, lr);
      objective.write_params(params, net);

      elog.ce += parts.ce;
      elog.align += parts.align;
      elog.total += parts.total;
      ++steps;
    }

    elog.ce /= static_cast<double>(steps);
    elog.align /= static_cast<double>(steps);
    elog.total /= static_cast<double>(steps);
    elog.train_accuracy = train_accuracy(net, net.effective_stack(t), task, classes, t);
    elog.probe_drift = probe_relation_drift(net, probe, cfg.alignment, t);
    log.epochs.push_back(elog);
  }
  return log;
}

namespace {

struct ProbeRef {
  int task = 0;
  std::vector<Sample> samples;
  std::vector<RelationMatrix> reference;  // relations at the task's close
  std::vector<Vector> reference_features;
};

ProbeRef make_probe_ref(const Backbone& net, const TaskData& task, Phi phi, int t) {
  ProbeRef ref;
  ref.task = t;
  ref.samples = probe_batch(task);
  std::vector<int> all_layers;
  for (Index l = 1; l <= net.config().layers; ++l) all_layers.push_back(static_cast<int>(l));
  std::vector<Matrix> weights = net.effective_stack(t);
  for (const Sample& s : ref.samples) {
    ActivationTrace trace = net.forward_with(weights, s.x, t, {});
    ref.reference.push_back(relation_matrix(trace, phi, all_layers));
    ref.reference_features.push_back(trace.z.back());
  }
  return ref;
}

DriftRow probe_drift_row(const Backbone& net, const ProbeRef& ref, Phi phi, int model_task) {
  DriftRow row;
  row.probe_task = ref.task;
  row.model_task = model_task;
  row.sample_count = static_cast<long>(ref.samples.size());
  std::vector<int> all_layers;
  for (Index l = 1; l <= net.config().layers; ++l) all_layers.push_back(static_cast<int>(l));
  std::vector<Matrix> weights = net.effective_stack(model_task);
  double rel_sum = 0.0, feat_sum = 0.0;
  for (std::size_t i = 0; i < ref.samples.size(); ++i) {
    ActivationTrace trace = net.forward_with(weights, ref.samples[i].x, model_task, {});
    rel_sum += relation_drift(ref.reference[i], relation_matrix(trace, phi, all_layers));
    feat_sum += (trace.z.back() - ref.reference_features[i]).norm();
  }
  if (!ref.samples.empty()) {
    rel_sum /= static_cast<double>(ref.samples.size());
    feat_sum /= static_cast<double>(ref.samples.size());
  }
  row.mean_relation_drift = rel_sum;
  row.mean_feature_drift = feat_sum;
  return row;
}

}  // namespace

RunReport run_stream(const StreamData& stream, const BackboneConfig& backbone_cfg,
                     const PretrainConfig& pretrain_cfg, const TrainConfig& train_cfg,
                     const RunOptions& options) {
  auto started = std::chrono::steady_clock::now();
  backbone_cfg.validate();
  train_cfg.validate(backbone_cfg.layers);
  if (stream.tasks.empty()) throw ContractViolation("run_stream: empty stream");

  // Base classes must stay disjoint from every stream label.
  for (const TaskData& task : stream.tasks)
    for (int label : task.labels)
      if (std::find(stream.base.labels.begin(), stream.base.labels.end(), label) !=
          stream.base.labels.end())
        throw ConfigError("stream.base_classes",
                          "class " + std::to_string(label) + " appears in both base and stream");

  Backbone net = pretrain_base(backbone_cfg, stream.base, train_cfg.seed, pretrain_cfg.epochs,
                               pretrain_cfg.lr, pretrain_cfg.batch);

  const int T = static_cast<int>(stream.tasks.size());
  RunReport report;
  report.seed = train_cfg.seed;
  report.data_hash = dataset_hash(stream.tasks);

  std::map<int, ClassStats> stats_cache;
  std::vector<ProbeRef> probes;
  Rng pseudo_rng(train_cfg.seed, "pseudo");

  for (int t = 1; t <= T; ++t) {
    const TaskData& task = stream.tasks[static_cast<std::size_t>(t - 1)];
    report.task_logs.push_back(train_task(net, task, train_cfg, t));

    // Class statistics are cached at the task's close, under the model that
    // just trained them; later recalibrations reuse these frozen Gaussians.
    {
      std::vector<Matrix> weights = net.effective_stack(t);
      std::map<int, std::vector<Vector>> feats;
      for (const Sample& s : task.train) {
        ActivationTrace trace = net.forward_with(weights, s.x, t, {});
        feats[s.label].push_back(trace.z.back());
      }
      for (auto& [label, fs] : feats) stats_cache[label] = fit_class_stats(label, fs);
    }

    if (train_cfg.recalibration.enabled) {
      Rng recal_rng = pseudo_rng.substream(static_cast<std::uint64_t>(t));
      recalibrate_classifier(net, stats_cache, train_cfg.recalibration.samples_per_class,
                             train_cfg.recalibration.epochs, train_cfg.recalibration.lr,
                             train_cfg.recalibration.batch, recal_rng);
    }

    probes.push_back(make_probe_ref(net, task, train_cfg.alignment.phi, t));

    // Accuracy row over all seen tasks with the cumulative class set.
    std::vector<int> cumulative = net.known_classes();
    std::vector<Matrix> weights = net.effective_stack(t);
    std::vector<double> row;
    for (int j = 1; j <= t; ++j) {
      const TaskData& probe_task = stream.tasks[static_cast<std::size_t>(j - 1)];
      long correct = 0;
      for (const Sample& s : probe_task.test) {
        ActivationTrace trace = net.forward_with(weights, s.x, t, cumulative);
        if (predicted_class(trace) == s.label) ++correct;
      }
      row.push_back(static_cast<double>(correct) /
                    static_cast<double>(probe_task.test.size()));
    }
    report.accuracy.rows.push_back(std::move(row));

    for (const ProbeRef& ref : probes)
      report.drift.push_back(probe_drift_row(net, ref, train_cfg.alignment.phi, t));

    if (options.keep_checkpoints || options.run_theory) report.checkpoints.push_back(net);
  }

  report.summary = summarize(report.accuracy);
  report.forgetting_series = forgetting(report.accuracy);
  if (options.run_theory) {
    report.theory = theory_report(report.checkpoints, stream.tasks);
    report.has_theory = true;
  }
  if (!options.keep_checkpoints && !options.run_theory) report.checkpoints.clear();

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace loralab
