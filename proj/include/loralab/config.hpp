#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "loralab/backbone.hpp"
#include "loralab/stream.hpp"
#include "loralab/trainer.hpp"

namespace loralab {

std::string to_string(AlignStrategy s);
std::string to_string(Phi p);
AlignStrategy strategy_from_string(const std::string& s);
Phi phi_from_string(const std::string& s);

/// Composite experiment description. One top-level seed feeds the stream,
/// initialization, batching, and sampling streams.
struct ExperimentConfig {
  std::string label = "default";
  std::uint64_t seed = 1;
  StreamSpec stream;
  BackboneConfig backbone;
  PretrainConfig pretrain;
  TrainConfig train;

  /// Re-derives dependent fields (per-component seeds, backbone input dim).
  void normalize();
  void validate() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);

  /// Reads a config file; a report.json written by the run command is also
  /// accepted (its config echo is used).
  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig load_with_overrides(const std::string& path,
                                              const std::vector<std::string>& sets);

  /// Applies one dotted-path override like "train.lambda=0".
  static void apply_override(nlohmann::json& j, const std::string& dotted);
};

}  // namespace loralab
