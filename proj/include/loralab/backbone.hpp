#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loralab/linalg.hpp"
#include "loralab/rng.hpp"
#include "loralab/stream.hpp"

namespace loralab {

enum class Activation { tanh };

struct BackboneConfig {
  Index input_dim = 16;
  Index width = 32;  // d
  Index layers = 6;  // L
  Activation activation = Activation::tanh;
  Index adapter_rank = 4;  // r
  std::vector<int> adapter_targets;  // 1-based layers; empty = all layers

  void validate() const;
  bool targets_layer(int layer) const;
  std::vector<int> resolved_targets() const;
};

/// Low-rank pair per targeted layer. At creation B is exactly zero and A is
/// Gaussian with standard deviation 1/sqrt(r).
struct TaskAdapter {
  int task = 0;  // 1-based
  std::map<int, Matrix> a;  // r x d
  std::map<int, Matrix> b;  // d x r
};

/// Layer states captured by one forward pass. z[0] is the embedding output;
/// h[l] (1-based, h[0] unused) is the residual branch at layer l with
/// z[l] = z[l-1] + h[l] exactly.
struct ActivationTrace {
  std::vector<Vector> z;
  std::vector<Vector> h;
  Vector logits;             // over `classes`, same order
  std::vector<int> classes;  // ascending class ids
  int horizon = 0;
};

/// Residual network with a frozen embedding and base, a growable per-task
/// adapter stack, and bias-free classifier heads. Only the newest task's
/// adapter and the heads are ever trainable.
class Backbone {
 public:
  Backbone(BackboneConfig config, std::uint64_t seed);

  const BackboneConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  int newest_task() const { return static_cast<int>(adapters_.size()); }

  /// W_0^l + sum_{j<=horizon} B_j^l A_j^l; horizon 0 is the base weight.
  Matrix effective_weight(int layer, int horizon) const;
  /// All layer weights at one horizon (1-based indexing via element l-1).
  std::vector<Matrix> effective_stack(int horizon) const;

  ActivationTrace forward(const Vector& x, int horizon, const std::vector<int>& classes) const;
  /// Forward with precomputed layer weights; used by training inner loops.
  ActivationTrace forward_with(const std::vector<Matrix>& weights, const Vector& x,
                               int horizon, const std::vector<int>& classes) const;

  /// Traces under the frozen previous model (horizon t-1) and the current
  /// model (horizon t); no gradient ever flows into the first.
  std::pair<ActivationTrace, ActivationTrace> dual_forward(const Vector& x, int t,
                                                           const std::vector<int>& classes) const;

  /// Appends the adapter for task t (must be newest_task()+1).
  TaskAdapter& add_task_adapter(int t, Rng& rng);

  const Matrix& embedding() const { return embed_; }
  const Matrix& base_weight(int layer) const;
  Matrix& mutable_base_weight(int layer);
  const Vector& bias(int layer) const;
  Vector& mutable_bias(int layer);
  const std::vector<TaskAdapter>& adapters() const { return adapters_; }
  TaskAdapter& adapter(int t);
  const TaskAdapter& adapter(int t) const;

  const std::map<int, Vector>& heads() const { return heads_; }
  std::map<int, Vector>& heads() { return heads_; }
  std::vector<int> known_classes() const;

  /// Serialized bytes of the frozen state: base, embedding, biases, and
  /// adapters for tasks <= horizon. Used by freeze-invariant checks.
  std::string frozen_state_bytes(int horizon) const;

  nlohmann::json to_json() const;
  static Backbone from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Backbone load(const std::string& path);

 private:
  BackboneConfig config_;
  std::uint64_t seed_ = 0;
  Matrix embed_;                 // d x input_dim, frozen always
  std::vector<Matrix> base_;     // d x d per layer
  std::vector<Vector> biases_;   // d per layer
  std::vector<TaskAdapter> adapters_;
  std::map<int, Vector> heads_;  // class id -> d
};

/// Trains the base weights and biases by plain mini-batch gradient descent
/// on cross-entropy over base_data, then discards the temporary base-class
/// heads. base_data may be empty (weights stay at initialization).
Backbone pretrain_base(const BackboneConfig& config, const TaskData& base_data,
                       std::uint64_t seed, int epochs, double lr, int batch_size);

/// argmax_k logits_k with ties broken toward the lowest class id.
int predicted_class(const ActivationTrace& trace);

}  // namespace loralab
