#pragma once

#include <cstdint>
#include <vector>

#include "loralab/backbone.hpp"
#include "loralab/metrics.hpp"
#include "loralab/objectives.hpp"
#include "loralab/relation.hpp"
#include "loralab/stream.hpp"

namespace loralab {

enum class OptimizerKind { adam, sgd };
enum class LrSchedule { constant, cosine };
enum class LambdaSchedule { constant, cosine, exponential, linear };

struct RecalibrationConfig {
  bool enabled = true;
  int samples_per_class = 256;
  int epochs = 5;
  double lr = 1e-2;
  int batch = 128;
};

struct TrainConfig {
  int epochs = 20;
  int batch = 32;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 5e-3;
  LrSchedule lr_schedule = LrSchedule::cosine;
  double lambda = 1.0;
  LambdaSchedule lambda_schedule = LambdaSchedule::constant;
  AlignmentConfig alignment;
  RecalibrationConfig recalibration;
  std::uint64_t seed = 1;

  void validate(Index layers) const;
};

struct PretrainConfig {
  int epochs = 40;
  double lr = 0.05;
  int batch = 32;
};

/// Trade-off coefficient at a given epoch. All dynamic schedules decay from
/// base toward zero across the task's epochs.
double lambda_at(LambdaSchedule schedule, double base, int epoch, int total_epochs);
double lr_at(LrSchedule schedule, double base, int epoch, int total_epochs);

/// Adam moments are reset at every task start since the trainable set
/// changes; sgd keeps no state.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  Vector m, v;
  long step = 0;

  void reset(OptimizerKind k, Index size);
  void apply(Vector& params, const Vector& grad, double lr);
};

struct EpochLog {
  double ce = 0.0;
  double align = 0.0;
  double total = 0.0;
  double lambda_effective = 0.0;
  double train_accuracy = 0.0;
  double probe_drift = 0.0;  // current task's probe, horizon t vs t-1
};

struct TaskLog {
  int task = 0;
  std::vector<EpochLog> epochs;
};

struct DriftRow {
  int probe_task = 0;
  int model_task = 0;
  long sample_count = 0;
  double mean_relation_drift = 0.0;
  double mean_feature_drift = 0.0;
};

struct RunOptions {
  bool keep_checkpoints = false;
  bool run_theory = false;
};

struct RunReport {
  AccuracyMatrix accuracy;
  AccuracySummary summary;
  std::vector<double> forgetting_series;  // F_2..F_T
  std::vector<TaskLog> task_logs;
  std::vector<DriftRow> drift;
  std::uint64_t seed = 0;
  std::uint64_t data_hash = 0;
  double wall_clock_seconds = 0.0;
  std::vector<Backbone> checkpoints;  // post-task states when requested
  BoundReport theory;
  bool has_theory = false;
};

/// One task of Algorithm-style training: appends the adapter, then runs
/// the epoch/step loop updating only the task adapter and current heads.
TaskLog train_task(Backbone& net, const TaskData& task, const TrainConfig& cfg, int t);

/// Full class-incremental run: pretraining, per-task training, optional
/// recalibration, accuracy-matrix evaluation, and drift tracking.
RunReport run_stream(const StreamData& stream, const BackboneConfig& backbone_cfg,
                     const PretrainConfig& pretrain_cfg, const TrainConfig& train_cfg,
                     const RunOptions& options = {});

/// Fixed probe of a task: its first min(64, n) training samples.
std::vector<Sample> probe_batch(const TaskData& task);

}  // namespace loralab
