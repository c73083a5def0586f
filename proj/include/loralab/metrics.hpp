#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loralab/backbone.hpp"
#include "loralab/relation.hpp"
#include "loralab/stream.hpp"

namespace loralab {

/// Lower-triangular a_{i,j}: test accuracy on task j after learning task i
/// (1-based tasks, entries in [0,1]).
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;  // rows[i-1] has i entries

  int tasks() const { return static_cast<int>(rows.size()); }
  double at(int i, int j) const;
  void validate() const;
};

struct AccuracySummary {
  std::vector<double> a_i;  // average accuracy after each task
  double a_last = 0.0;
  double a_avg = 0.0;
};

AccuracySummary summarize(const AccuracyMatrix& acc);

/// F_t = (1/(t-1)) sum_{s<t} (E_s(W_t) - E_s(W_s)) from an error table
/// errors[t-1][s-1] = E_s(W_t). Returns F_2..F_T (F_1 undefined).
std::vector<double> forgetting(const std::vector<std::vector<double>>& errors);
std::vector<double> forgetting(const AccuracyMatrix& acc);

/// Classification margin: score of the label head minus the best wrong
/// head over the given class set (needs at least two classes).
double margin(const ActivationTrace& trace, int label, const std::map<int, Vector>& heads);

/// One evaluated inequality. holds <=> lhs <= rhs + 1e-6 * max(1, |rhs|);
/// excluded records carry a reason and do not count toward hold statistics.
struct BoundRecord {
  std::string name;
  int s = 0;
  int t = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  bool excluded = false;
  std::string reason;
  long samples = 0;
};

struct BoundReport {
  std::vector<BoundRecord> records;

  long total() const;
  long held() const;
  long violated() const;
  long excluded() const;
  std::string to_text() const;
};

bool bound_holds(double lhs, double rhs);

/// Raw per-pair measurements on task-s test samples between the checkpoints
/// after tasks s and t; building block of theory_report and its tests.
struct PairMeasurement {
  int s = 0, t = 0;
  double err_s = 0.0, err_t = 0.0;
  double mean_margin_drop = 0.0;
  double gamma_min = 0.0;      // over samples correct under W_s
  long correct_under_s = 0;
  long samples = 0;
  double max_residual_identity_error = 0.0;  // relative
  // Worst-sample slack records: lhs - rhs maximized over samples.
  BoundRecord lemma2;
  BoundRecord lemma3;
  BoundRecord weyl;
  long lemma3_excluded = 0;  // lambda_min below the floor
  // Per-sample pieces consumed by the theorem aggregation.
  std::vector<double> sum_dh_sq;        // sum_l ||dh^l||^2
  std::vector<double> norm_sum_dh;      // ||sum_l dh^l||
  std::vector<double> lambda_min_rss;   // smallest eigenvalue of R_{s,s}
  std::vector<double> drift_sq;         // ||R_{s,t} - R_{s,s}||_F^2
};

PairMeasurement measure_pair(const Backbone& cp_s, const Backbone& cp_t, int s, int t,
                             const TaskData& task_s);

/// Evaluates every Lemma-1/2/3 and Theorem-1/2 record plus the residual
/// identity and Weyl sub-reports across all checkpoint pairs; inner-product
/// phi throughout. checkpoints[k] is the state after task k+1.
BoundReport theory_report(const std::vector<Backbone>& checkpoints,
                          const std::vector<TaskData>& tasks);

/// Spectral norm of the stacked head matrix (rows w_k^T for k in heads).
double head_stack_spectral_norm(const std::map<int, Vector>& heads);

constexpr double kLambdaMinFloor = 1e-8;

}  // namespace loralab
