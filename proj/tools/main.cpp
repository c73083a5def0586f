#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loralab/commands.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool corrupt_gradient = false;
};

void add_common(CLI::App* cmd, GlobalOptions& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)");
  cmd->add_option("--set", opts.sets, "dotted override, e.g. train.lambda=0")->take_all();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "override the config seed");
}

loralab::ExperimentConfig load_config(const GlobalOptions& opts) {
  auto cfg = loralab::ExperimentConfig::load_with_overrides(opts.config_path, opts.sets);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.normalize();
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-incremental low-rank adaptation laboratory"};
  app.require_subcommand(1);

  GlobalOptions opts;
  CLI::App* run = app.add_subcommand("run", "train a stream and write report files");
  CLI::App* ablate = app.add_subcommand("ablate", "compare alignment strategies");
  CLI::App* theory = app.add_subcommand("theory", "evaluate the bound report");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients against differences");
  CLI::App* exporter = app.add_subcommand("export", "write dataset CSVs and manifest");
  for (CLI::App* cmd : {run, ablate, theory, gradcheck, exporter}) add_common(cmd, opts);
  gradcheck->add_flag("--corrupt-gradient", opts.corrupt_gradient,
                      "inject a deliberate gradient error (negative control)")
      ->group("");  // test hook, hidden from help

  CLI11_PARSE(app, argc, argv);

  try {
    loralab::ExperimentConfig cfg = load_config(opts);
    if (run->parsed()) return loralab::cmd_run(cfg, opts.out_dir);
    if (ablate->parsed()) return loralab::cmd_ablate(cfg, opts.out_dir);
    if (theory->parsed()) return loralab::cmd_theory(cfg, opts.out_dir);
    if (gradcheck->parsed())
      return loralab::cmd_gradcheck(cfg, opts.out_dir, opts.corrupt_gradient);
    if (exporter->parsed()) return loralab::cmd_export(cfg, opts.out_dir);
  } catch (const loralab::ConfigError& e) {
    std::cerr << "{\"error\":\"config\",\"field\":\"" << e.field << "\",\"message\":\""
              << e.what() << "\"}\n";
    return 2;
  } catch (const loralab::ParseError& e) {
    std::cerr << "{\"error\":\"parse\",\"message\":\"" << e.what() << "\"}\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"runtime\",\"message\":\"" << e.what() << "\"}\n";
    return 1;
  }
  return 0;
}
