#include "loralab/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "loralab/serialize.hpp"

namespace loralab {

using nlohmann::json;

void BackboneConfig::validate() const {
  if (layers < 2) throw ConfigError("backbone.layers", "need at least 2 layers");
  if (width <= 0) throw ConfigError("backbone.width", "must be positive");
  if (input_dim <= 0) throw ConfigError("backbone.input_dim", "must be positive");
  if (adapter_rank < 1 || adapter_rank > width)
    throw ConfigError("backbone.adapter_rank", "need 1 <= rank <= width");
  for (int t : adapter_targets)
    if (t < 1 || t > layers)
      throw ConfigError("backbone.adapter_targets", "layer index out of range");
}

bool BackboneConfig::targets_layer(int layer) const {
  if (adapter_targets.empty()) return true;
  return std::find(adapter_targets.begin(), adapter_targets.end(), layer) !=
         adapter_targets.end();
}

std::vector<int> BackboneConfig::resolved_targets() const {
  if (!adapter_targets.empty()) {
    std::vector<int> t = adapter_targets;
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }
  std::vector<int> all(static_cast<std::size_t>(layers));
  for (Index l = 0; l < layers; ++l) all[static_cast<std::size_t>(l)] = static_cast<int>(l) + 1;
  return all;
}

Backbone::Backbone(BackboneConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  Rng init(seed_, "init");
  const Index d = config_.width;

  embed_.resize(d, config_.input_dim);
  double embed_scale = 1.0 / std::sqrt(static_cast<double>(config_.input_dim));
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < config_.input_dim; ++c)
      embed_(r, c) = embed_scale * init.next_gaussian();

  double base_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (Index l = 0; l < config_.layers; ++l) {
    Matrix w(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) w(r, c) = base_scale * init.next_gaussian();
    base_.push_back(std::move(w));
    biases_.push_back(Vector::Zero(d));
  }
}

const Matrix& Backbone::base_weight(int layer) const {
  if (layer < 1 || layer > config_.layers)
    throw ContractViolation("base_weight: layer out of range");
  return base_[static_cast<std::size_t>(layer - 1)];
}

Matrix& Backbone::mutable_base_weight(int layer) {
  return const_cast<Matrix&>(std::as_const(*this).base_weight(layer));
}

const Vector& Backbone::bias(int layer) const {
  if (layer < 1 || layer > config_.layers)
    throw ContractViolation("bias: layer out of range");
  return biases_[static_cast<std::size_t>(layer - 1)];
}

Vector& Backbone::mutable_bias(int layer) {
  return const_cast<Vector&>(std::as_const(*this).bias(layer));
}

TaskAdapter& Backbone::adapter(int t) {
  if (t < 1 || t > newest_task()) throw ContractViolation("adapter: no such task");
  return adapters_[static_cast<std::size_t>(t - 1)];
}

const TaskAdapter& Backbone::adapter(int t) const {
  if (t < 1 || t > newest_task()) throw ContractViolation("adapter: no such task");
  return adapters_[static_cast<std::size_t>(t - 1)];
}

std::vector<int> Backbone::known_classes() const {
  std::vector<int> out;
  for (const auto& [id, w] : heads_) out.push_back(id);
  return out;
}

Matrix Backbone::effective_weight(int layer, int horizon) const {
  if (horizon < 0 || horizon > newest_task())
    throw ContractViolation("effective_weight: horizon out of range");
  Matrix w = base_weight(layer);
  for (int j = 1; j <= horizon; ++j) {
    const TaskAdapter& ad = adapters_[static_cast<std::size_t>(j - 1)];
    auto it = ad.b.find(layer);
    if (it != ad.b.end()) w.noalias() += it->second * ad.a.at(layer);
  }
  return w;
}

std::vector<Matrix> Backbone::effective_stack(int horizon) const {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(config_.layers));
  for (int l = 1; l <= config_.layers; ++l) out.push_back(effective_weight(l, horizon));
  return out;
}

ActivationTrace Backbone::forward_with(const std::vector<Matrix>& weights, const Vector& x,
                                       int horizon, const std::vector<int>& classes) const {
  if (x.size() != config_.input_dim)
    throw ContractViolation("forward: input dimension mismatch");
  ActivationTrace trace;
  trace.horizon = horizon;
  trace.classes = classes;
  std::sort(trace.classes.begin(), trace.classes.end());
  trace.classes.erase(std::unique(trace.classes.begin(), trace.classes.end()),
                      trace.classes.end());

  trace.z.resize(static_cast<std::size_t>(config_.layers) + 1);
  trace.h.resize(static_cast<std::size_t>(config_.layers) + 1);
  trace.z[0] = embed_ * x;
  for (int l = 1; l <= config_.layers; ++l) {
    Vector u = weights[static_cast<std::size_t>(l - 1)] * trace.z[static_cast<std::size_t>(l - 1)] +
               biases_[static_cast<std::size_t>(l - 1)];
    trace.h[static_cast<std::size_t>(l)] = u.array().tanh();
    trace.z[static_cast<std::size_t>(l)] =
        trace.z[static_cast<std::size_t>(l - 1)] + trace.h[static_cast<std::size_t>(l)];
  }

  trace.logits.resize(static_cast<Index>(trace.classes.size()));
  const Vector& top = trace.z[static_cast<std::size_t>(config_.layers)];
  for (std::size_t i = 0; i < trace.classes.size(); ++i) {
    auto it = heads_.find(trace.classes[i]);
    if (it == heads_.end())
      throw ContractViolation("forward: unknown class " + std::to_string(trace.classes[i]));
    trace.logits[static_cast<Index>(i)] = top.dot(it->second);
  }
  return trace;
}

ActivationTrace Backbone::forward(const Vector& x, int horizon,
                                  const std::vector<int>& classes) const {
  if (horizon < 0 || horizon > newest_task())
    throw ContractViolation("forward: horizon out of range");
  return forward_with(effective_stack(horizon), x, horizon, classes);
}

std::pair<ActivationTrace, ActivationTrace> Backbone::dual_forward(
    const Vector& x, int t, const std::vector<int>& classes) const {
  if (t < 1 || t > newest_task())
    throw ContractViolation("dual_forward: task adapter missing");
  return {forward(x, t - 1, classes), forward(x, t, classes)};
}

TaskAdapter& Backbone::add_task_adapter(int t, Rng& rng) {
  if (t != newest_task() + 1)
    throw ContractViolation("add_task_adapter: expected task " +
                            std::to_string(newest_task() + 1) + ", got " + std::to_string(t));
  TaskAdapter ad;
  ad.task = t;
  const Index d = config_.width;
  const Index r = config_.adapter_rank;
  double scale = 1.0 / std::sqrt(static_cast<double>(r));
  for (int layer : config_.resolved_targets()) {
    Matrix a(r, d);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < d; ++j) a(i, j) = scale * rng.next_gaussian();
    ad.a[layer] = std::move(a);
    ad.b[layer] = Matrix::Zero(d, r);
  }
  adapters_.push_back(std::move(ad));
  return adapters_.back();
}

std::string Backbone::frozen_state_bytes(int horizon) const {
  std::string bytes;
  auto append = [&bytes](const double* p, Index n) {
    bytes.append(reinterpret_cast<const char*>(p), sizeof(double) * static_cast<std::size_t>(n));
  };
  append(embed_.data(), embed_.size());
  for (const Matrix& w : base_) append(w.data(), w.size());
  for (const Vector& b : biases_) append(b.data(), b.size());
  for (int j = 1; j <= horizon && j <= newest_task(); ++j) {
    const TaskAdapter& ad = adapters_[static_cast<std::size_t>(j - 1)];
    for (const auto& [layer, a] : ad.a) append(a.data(), a.size());
    for (const auto& [layer, b] : ad.b) append(b.data(), b.size());
  }
  return bytes;
}

int predicted_class(const ActivationTrace& trace) {
  if (trace.classes.empty()) throw ContractViolation("predicted_class: empty class set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.classes.size(); ++i)
    if (trace.logits[static_cast<Index>(i)] > trace.logits[static_cast<Index>(best)]) best = i;
  return trace.classes[best];
}

namespace {

// -log softmax[label]; writes the logit gradient (softmax - onehot).
double ce_with_logit_grad(const Vector& logits, Index label, Vector& grad) {
  double max_logit = logits.maxCoeff();
  Vector shifted = logits.array() - max_logit;
  Vector ex = shifted.array().exp();
  double denom = ex.sum();
  grad = ex / denom;
  double loss = std::log(denom) - shifted[label];
  grad[label] -= 1.0;
  return loss;
}

}  // namespace

Backbone pretrain_base(const BackboneConfig& config, const TaskData& base_data,
                       std::uint64_t seed, int epochs, double lr, int batch_size) {
  Backbone net(config, seed);
  if (base_data.train.empty() || epochs <= 0) return net;
  if (batch_size < 1) throw ContractViolation("pretrain_base: batch size must be positive");

  std::vector<int> classes = base_data.labels;
  std::sort(classes.begin(), classes.end());

  // Temporary heads for the base classes; discarded after training.
  const Index d = config.width;
  Rng head_init = Rng(seed, "init").substream(0xBA5Eull);
  std::map<int, Vector> heads;
  for (int c : classes) {
    Vector w(d);
    for (Index i = 0; i < d; ++i) w[i] = 0.01 * head_init.next_gaussian();
    heads[c] = w;
  }

  const Index L = config.layers;
  Rng batch_rng = Rng(seed, "batch").substream(0);
  std::vector<std::size_t> order(base_data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    batch_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      double inv_n = 1.0 / static_cast<double>(end - start);

      std::vector<Matrix> gw(static_cast<std::size_t>(L), Matrix::Zero(d, d));
      std::vector<Vector> gb(static_cast<std::size_t>(L), Vector::Zero(d));
      std::map<int, Vector> gh;
      for (int c : classes) gh[c] = Vector::Zero(d);

      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = base_data.train[order[k]];
        ActivationTrace trace;
        trace.z.resize(static_cast<std::size_t>(L) + 1);
        trace.h.resize(static_cast<std::size_t>(L) + 1);
        trace.z[0] = net.embedding() * s.x;
        for (int l = 1; l <= L; ++l) {
          Vector u = net.base_weight(l) * trace.z[static_cast<std::size_t>(l - 1)] + net.bias(l);
          trace.h[static_cast<std::size_t>(l)] = u.array().tanh();
          trace.z[static_cast<std::size_t>(l)] =
              trace.z[static_cast<std::size_t>(l - 1)] + trace.h[static_cast<std::size_t>(l)];
        }
        Vector logits(static_cast<Index>(classes.size()));
        const Vector& top = trace.z[static_cast<std::size_t>(L)];
        for (std::size_t i = 0; i < classes.size(); ++i) logits[static_cast<Index>(i)] = top.dot(heads[classes[i]]);

        Index label = static_cast<Index>(
            std::lower_bound(classes.begin(), classes.end(), s.label) - classes.begin());
        Vector glogits;
        ce_with_logit_grad(logits, label, glogits);
        glogits *= inv_n;

        Vector gz = Vector::Zero(d);
        for (std::size_t i = 0; i < classes.size(); ++i) {
          gz.noalias() += glogits[static_cast<Index>(i)] * heads[classes[i]];
          gh[classes[i]].noalias() += glogits[static_cast<Index>(i)] * top;
        }
        for (int l = L; l >= 1; --l) {
          const Vector& h = trace.h[static_cast<std::size_t>(l)];
          Vector gu = (1.0 - h.array().square()).matrix().cwiseProduct(gz);
          gw[static_cast<std::size_t>(l - 1)].noalias() +=
              gu * trace.z[static_cast<std::size_t>(l - 1)].transpose();
          gb[static_cast<std::size_t>(l - 1)] += gu;
          gz.noalias() += net.base_weight(l).transpose() * gu;
        }
      }

      for (int l = 1; l <= L; ++l) {
        net.mutable_base_weight(l) -= lr * gw[static_cast<std::size_t>(l - 1)];
        net.mutable_bias(l) -= lr * gb[static_cast<std::size_t>(l - 1)];
      }
      for (int c : classes) heads[c] -= lr * gh[c];
    }
  }
  return net;
}

json Backbone::to_json() const {
  json j;
  j["config"]["input_dim"] = config_.input_dim;
  j["config"]["width"] = config_.width;
  j["config"]["layers"] = config_.layers;
  j["config"]["activation"] = "tanh";
  j["config"]["adapter_rank"] = config_.adapter_rank;
  j["config"]["adapter_targets"] = config_.adapter_targets;
  j["seed"] = seed_;
  j["embedding"] = matrix_to_json(embed_);
  j["base"] = json::array();
  for (const Matrix& w : base_) j["base"].push_back(matrix_to_json(w));
  j["biases"] = json::array();
  for (const Vector& b : biases_) j["biases"].push_back(vector_to_json(b));
  j["adapters"] = json::array();
  for (const TaskAdapter& ad : adapters_) {
    json ja;
    ja["task"] = ad.task;
    ja["layers"] = json::array();
    for (const auto& [layer, a] : ad.a) {
      json jl;
      jl["layer"] = layer;
      jl["a"] = matrix_to_json(a);
      jl["b"] = matrix_to_json(ad.b.at(layer));
      ja["layers"].push_back(jl);
    }
    j["adapters"].push_back(ja);
  }
  j["heads"] = json::array();
  for (const auto& [id, w] : heads_) {
    json jh;
    jh["class"] = id;
    jh["w"] = vector_to_json(w);
    j["heads"].push_back(jh);
  }
  return j;
}

Backbone Backbone::from_json(const json& j) {
  BackboneConfig config;
  config.input_dim = j.at("config").at("input_dim").get<Index>();
  config.width = j.at("config").at("width").get<Index>();
  config.layers = j.at("config").at("layers").get<Index>();
  config.adapter_rank = j.at("config").at("adapter_rank").get<Index>();
  config.adapter_targets = j.at("config").at("adapter_targets").get<std::vector<int>>();

  Backbone net(config, j.at("seed").get<std::uint64_t>());
  net.embed_ = matrix_from_json(j.at("embedding"));
  net.base_.clear();
  for (const json& w : j.at("base")) net.base_.push_back(matrix_from_json(w));
  net.biases_.clear();
  for (const json& b : j.at("biases")) net.biases_.push_back(vector_from_json(b));
  for (const json& ja : j.at("adapters")) {
    TaskAdapter ad;
    ad.task = ja.at("task").get<int>();
    for (const json& jl : ja.at("layers")) {
      int layer = jl.at("layer").get<int>();
      ad.a[layer] = matrix_from_json(jl.at("a"));
      ad.b[layer] = matrix_from_json(jl.at("b"));
    }
    net.adapters_.push_back(std::move(ad));
  }
  for (const json& jh : j.at("heads"))
    net.heads_[jh.at("class").get<int>()] = vector_from_json(jh.at("w"));
  return net;
}

void Backbone::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw NumericalError("cannot write checkpoint '" + path + "'");
  out << to_json().dump(2) << "\n";
}

Backbone Backbone::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  return from_json(j);
}

}  // namespace loralab
