#include "loralab/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace loralab {

namespace fs = std::filesystem;
using nlohmann::json;

void write_accuracy_csv(const AccuracyMatrix& acc, const std::string& path) {
  std::ofstream out(path);
  out << "task_i,task_j,accuracy\n";
  for (int i = 1; i <= acc.tasks(); ++i)
    for (int j = 1; j <= i; ++j)
      out << i << "," << j << "," << format_real(acc.at(i, j)) << "\n";
}

void write_drift_csv(const std::vector<DriftRow>& rows, const std::string& path) {
  std::ofstream out(path);
  out << "probe_task,model_task,sample_count,mean_relation_drift,mean_feature_drift\n";
  for (const DriftRow& r : rows)
    out << r.probe_task << "," << r.model_task << "," << r.sample_count << ","
        << format_real(r.mean_relation_drift) << "," << format_real(r.mean_feature_drift)
        << "\n";
}

json report_to_json(const RunReport& report, const ExperimentConfig& cfg) {
  json j;
  j["config"] = cfg.to_json();
  j["seed"] = report.seed;
  j["data_hash"] = report.data_hash;
  j["accuracy_matrix"] = report.accuracy.rows;
  j["a_i"] = report.summary.a_i;
  j["a_last"] = report.summary.a_last;
  j["a_avg"] = report.summary.a_avg;
  j["forgetting"] = report.forgetting_series;
  j["task_logs"] = json::array();
  for (const TaskLog& tl : report.task_logs) {
    json epochs = json::array();
    for (const EpochLog& e : tl.epochs)
      epochs.push_back({{"ce", e.ce},
                        {"align", e.align},
                        {"total", e.total},
                        {"lambda_effective", e.lambda_effective},
                        {"train_accuracy", e.train_accuracy},
                        {"probe_drift", e.probe_drift}});
    j["task_logs"].push_back({{"task", tl.task}, {"epochs", epochs}});
  }
  j["drift"] = json::array();
  for (const DriftRow& r : report.drift)
    j["drift"].push_back({{"probe_task", r.probe_task},
                          {"model_task", r.model_task},
                          {"sample_count", r.sample_count},
                          {"mean_relation_drift", r.mean_relation_drift},
                          {"mean_feature_drift", r.mean_feature_drift}});
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

RunReport execute_run(const ExperimentConfig& cfg, const std::string& out_dir,
                      bool theory_mode) {
  cfg.validate();
  fs::create_directories(out_dir);
  StreamData stream = load_dataset(cfg.stream);

  RunOptions options;
  options.run_theory = theory_mode;
  options.keep_checkpoints = theory_mode;
  RunReport report = run_stream(stream, cfg.backbone, cfg.pretrain, cfg.train, options);

  json j = report_to_json(report, cfg);
  if (theory_mode) {
    for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "checkpoint_task%02zu.json", i + 1);
      report.checkpoints[i].save((fs::path(out_dir) / name).string());
    }
    std::ofstream theory_out(fs::path(out_dir) / "theory.txt");
    theory_out << report.theory.to_text();
    j["theory_path"] = "theory.txt";
  }
  std::ofstream report_out(fs::path(out_dir) / "report.json");
  report_out << j.dump(2) << "\n";
  write_accuracy_csv(report.accuracy, (fs::path(out_dir) / "accuracy.csv").string());
  write_drift_csv(report.drift, (fs::path(out_dir) / "drift.csv").string());
  return report;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunReport report = execute_run(cfg, out_dir, false);
  std::cout << "run '" << cfg.label << "' tasks=" << report.accuracy.tasks()
            << " a_last=" << format_real(report.summary.a_last)
            << " a_avg=" << format_real(report.summary.a_avg) << "\n";
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);

  struct Variant {
    const char* name;
    AlignStrategy strategy;
    bool normalize;
  };
  const std::vector<Variant> variants = {
      {"none", AlignStrategy::none, true},
      {"feature_last", AlignStrategy::feature_last, true},
      {"feature_last_nonorm", AlignStrategy::feature_last, false},
      {"feature_all", AlignStrategy::feature_all, true},
      {"feature_all_nonorm", AlignStrategy::feature_all, false},
      {"p2p", AlignStrategy::p2p, true},
      {"b_eigen", AlignStrategy::b_eigen, true},
      {"eigen", AlignStrategy::eigen, true},
  };

  StreamData stream = load_dataset(cfg.stream);

  std::ofstream out(fs::path(out_dir) / "ablation.csv");
  out << "strategy,normalize,a_last,a_avg,final_forgetting,data_hash\n";
  for (const Variant& v : variants) {
    ExperimentConfig variant_cfg = cfg;
    variant_cfg.train.alignment.strategy = v.strategy;
    variant_cfg.train.alignment.normalize_features = v.normalize;
    RunReport report =
        run_stream(stream, variant_cfg.backbone, variant_cfg.pretrain, variant_cfg.train);
    double final_forgetting =
        report.forgetting_series.empty() ? 0.0 : report.forgetting_series.back();
    out << v.name << "," << (v.normalize ? 1 : 0) << ","
        << format_real(report.summary.a_last) << "," << format_real(report.summary.a_avg)
        << "," << format_real(final_forgetting) << "," << report.data_hash << "\n";
    std::cout << "ablate " << v.name << " a_last=" << format_real(report.summary.a_last)
              << "\n";
  }
  return 0;
}

WeylSweep weyl_sweep(std::uint64_t seed, int cases) {
  Rng rng = Rng(seed, "data").substream(0x3E71ull);
  WeylSweep sweep;
  sweep.cases = cases;
  for (int i = 0; i < cases; ++i) {
    Index n = 2 + static_cast<Index>(rng.next_below(7));  // 2..8
    Matrix g(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) g(r, c) = rng.next_gaussian();
    Matrix base = g.transpose() * g;  // PSD
    Matrix e(n, n);
    for (Index r = 0; r < n; ++r) {
      for (Index c = r; c < n; ++c) {
        double v = rng.next_gaussian() * 0.5;
        e(r, c) = v;
        e(c, r) = v;
      }
    }
    WeylReport report = weyl_check(base, e);
    sweep.max_slack = std::max(sweep.max_slack, report.max_shift - report.e_norm);
    if (!report.holds) ++sweep.violations;
  }
  return sweep;
}

int cmd_theory(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunReport report = execute_run(cfg, out_dir, true);

  WeylSweep sweep = weyl_sweep(cfg.seed, 10000);
  {
    std::ofstream out(fs::path(out_dir) / "theory.txt", std::ios::app);
    out << "# weyl_sweep cases=" << sweep.cases << " violations=" << sweep.violations
        << " max_slack=" << format_real(sweep.max_slack) << "\n";
  }

  std::cout << report.theory.to_text();
  std::cout << "weyl_sweep cases=" << sweep.cases << " violations=" << sweep.violations
            << "\n";
  std::cout << "bound records held " << report.theory.held() << "/" << report.theory.total()
            << " (excluded " << report.theory.excluded() << ")\n";
  return 0;
}

namespace {

struct GradCase {
  AlignStrategy strategy;
  Phi phi;
  double lambda;
};

/// A small random backbone mid-way through a task, with non-zero adapters.
Backbone random_gradcheck_backbone(Rng& rng, int task_count, Index d, Index layers, Index rank,
                                   const std::vector<int>& classes) {
  BackboneConfig config;
  config.input_dim = 6;
  config.width = d;
  config.layers = layers;
  config.adapter_rank = rank;
  Backbone net(config, rng.next_u64());
  for (int t = 1; t <= task_count; ++t) {
    Rng adapter_rng = rng.substream(static_cast<std::uint64_t>(t));
    net.add_task_adapter(t, adapter_rng);
    TaskAdapter& ad = net.adapter(t);
    for (auto& [layer, b] : ad.b)
      for (Index i = 0; i < b.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j) b(i, j) = 0.3 * rng.next_gaussian();
  }
  for (int c : classes) {
    Vector w(d);
    for (Index i = 0; i < d; ++i) w[i] = 0.5 * rng.next_gaussian();
    net.heads()[c] = w;
  }
  return net;
}

}  // namespace

GradCheckResult run_gradcheck(std::uint64_t seed, int min_cases, bool corrupt) {
  // Every strategy crossed with lambda in {0, 1, 5}, then extra inner-phi
  // relation cases to reach the requested count.
  std::vector<GradCase> cases;
  for (AlignStrategy s : {AlignStrategy::eigen, AlignStrategy::b_eigen, AlignStrategy::p2p,
                          AlignStrategy::feature_last, AlignStrategy::feature_all,
                          AlignStrategy::none})
    for (double lambda : {0.0, 1.0, 5.0}) cases.push_back({s, Phi::cosine, lambda});
  cases.push_back({AlignStrategy::eigen, Phi::inner, 1.0});
  cases.push_back({AlignStrategy::p2p, Phi::inner, 5.0});
  while (static_cast<int>(cases.size()) < min_cases)
    cases.push_back({AlignStrategy::eigen, Phi::cosine, 1.0});

  GradCheckResult result;
  Rng master(seed, "init");
  for (std::size_t idx = 0; idx < cases.size(); ++idx) {
    const GradCase& gc = cases[idx];
    Rng case_rng = master.substream(idx);

    // Resample until the relation spectra are comfortably non-degenerate;
    // the eigen-loss subgradient is only checked away from ties.
    for (int attempt = 0;; ++attempt) {
      Rng rng = case_rng.substream(static_cast<std::uint64_t>(attempt));
      Index d = 8 + static_cast<Index>(rng.next_below(4));
      Index layers = 3 + static_cast<Index>(rng.next_below(2));
      int classes_n = 3 + static_cast<int>(rng.next_below(2));
      std::vector<int> classes;
      for (int c = 0; c < classes_n; ++c) classes.push_back(c);
      int task = 1 + static_cast<int>(rng.next_below(2));

      Backbone net = random_gradcheck_backbone(rng, task, d, layers, 2, classes);
      std::vector<Sample> batch;
      int batch_n = 2 + static_cast<int>(rng.next_below(2));
      for (int i = 0; i < batch_n; ++i) {
        Vector x(net.config().input_dim);
        for (Index k = 0; k < x.size(); ++k) x[k] = rng.next_gaussian();
        batch.push_back({x, static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes_n)))});
      }

      AlignmentConfig align;
      align.strategy = gc.strategy;
      align.phi = gc.phi;
      TaskObjective objective(net, task, batch, align, gc.lambda);
      Vector params = objective.initial_params();

      if (align.uses_relations() && gc.lambda > 0.0) {
        std::vector<RelationMatrix> prev, cur;
        objective.relation_pairs(params, prev, cur);
        double min_gap = std::numeric_limits<double>::infinity();
        double min_sv = std::numeric_limits<double>::infinity();
        for (const auto& r : prev) {
          RelationDiag diag = relation_diag(r);
          min_gap = std::min(min_gap, diag.min_gap);
          min_sv = std::min(min_sv, diag.min_singular);
        }
        for (const auto& r : cur) {
          RelationDiag diag = relation_diag(r);
          min_gap = std::min(min_gap, diag.min_gap);
          min_sv = std::min(min_sv, diag.min_singular);
        }
        if ((min_gap < 1e-3 || min_sv < 1e-3) && attempt < 50) continue;
      }

      GradRecord analytic = value_and_grad(objective, params);
      if (corrupt && idx == 0) analytic.gradient[0] += 1e-3;
      Vector numeric = finite_difference_gradient(objective, params, 1e-4);
      double err = max_relative_gradient_error(analytic.gradient, numeric);
      result.worst_error = std::max(result.worst_error, err);
      if (err >= 1e-5) result.failed_cases.push_back(static_cast<int>(idx));
      ++result.cases;
      break;
    }
  }
  return result;
}

int cmd_gradcheck(const ExperimentConfig& cfg, const std::string& out_dir, bool corrupt) {
  cfg.validate();
  fs::create_directories(out_dir);
  GradCheckResult result = run_gradcheck(cfg.seed, 20, corrupt);
  std::cout << "gradcheck cases=" << result.cases
            << " worst_relative_error=" << format_real(result.worst_error) << "\n";
  if (!result.failed_cases.empty()) {
    std::cerr << "{\"error\":\"gradient mismatch\",\"cases\":[";
    for (std::size_t i = 0; i < result.failed_cases.size(); ++i)
      std::cerr << (i ? "," : "") << result.failed_cases[i];
    std::cerr << "]}\n";
    return 1;
  }
  return 0;
}

int cmd_export(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  StreamData stream = load_dataset(cfg.stream);
  std::string manifest = export_stream(stream, out_dir);
  std::cout << "exported " << stream.tasks.size() << " tasks to " << manifest << "\n";
  return 0;
}

}  // namespace loralab
