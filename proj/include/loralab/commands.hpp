#pragma once

#include <string>

#include "loralab/config.hpp"
#include "loralab/trainer.hpp"

namespace loralab {

/// report.json, accuracy.csv, drift.csv; checkpoints + theory.txt in theory
/// mode. Returns the report for callers that keep going.
RunReport execute_run(const ExperimentConfig& cfg, const std::string& out_dir,
                      bool theory_mode = false);

int cmd_run(const ExperimentConfig& cfg, const std::string& out_dir);

/// One run per alignment strategy variant under a shared stream; writes
/// ablation.csv.
int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir);

/// Checkpointed run + bound report + randomized Weyl sweep; writes
/// theory.txt and prints one line per statement.
int cmd_theory(const ExperimentConfig& cfg, const std::string& out_dir);

struct GradCheckResult {
  int cases = 0;
  double worst_error = 0.0;
  std::vector<int> failed_cases;
};

/// Compares analytic gradients against central differences across random
/// configurations covering every strategy and lambda in {0,1,5}.
/// `corrupt` injects a deliberate error (negative control).
GradCheckResult run_gradcheck(std::uint64_t seed, int min_cases = 20, bool corrupt = false);

int cmd_gradcheck(const ExperimentConfig& cfg, const std::string& out_dir, bool corrupt = false);

/// Dataset CSVs + manifest.json for the configured stream.
int cmd_export(const ExperimentConfig& cfg, const std::string& out_dir);

/// Randomized Weyl sweep over symmetric PSD pairs.
struct WeylSweep {
  int cases = 0;
  int violations = 0;
  double max_slack = 0.0;  // largest max_shift - ||E||_F observed
};
WeylSweep weyl_sweep(std::uint64_t seed, int cases);

void write_accuracy_csv(const AccuracyMatrix& acc, const std::string& path);
void write_drift_csv(const std::vector<DriftRow>& rows, const std::string& path);
nlohmann::json report_to_json(const RunReport& report, const ExperimentConfig& cfg);

}  // namespace loralab
