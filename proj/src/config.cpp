#include "loralab/config.hpp"

#include <fstream>

namespace loralab {

using nlohmann::json;

std::string to_string(AlignStrategy s) {
  switch (s) {
    case AlignStrategy::eigen: return "eigen";
    case AlignStrategy::b_eigen: return "b_eigen";
    case AlignStrategy::p2p: return "p2p";
    case AlignStrategy::feature_last: return "feature_last";
    case AlignStrategy::feature_all: return "feature_all";
    case AlignStrategy::none: return "none";
  }
  return "?";
}

std::string to_string(Phi p) { return p == Phi::cosine ? "cosine" : "inner"; }

AlignStrategy strategy_from_string(const std::string& s) {
  if (s == "eigen") return AlignStrategy::eigen;
  if (s == "b_eigen") return AlignStrategy::b_eigen;
  if (s == "p2p") return AlignStrategy::p2p;
  if (s == "feature_last") return AlignStrategy::feature_last;
  if (s == "feature_all") return AlignStrategy::feature_all;
  if (s == "none") return AlignStrategy::none;
  throw ConfigError("alignment.strategy", "unknown strategy '" + s + "'");
}

Phi phi_from_string(const std::string& s) {
  if (s == "cosine") return Phi::cosine;
  if (s == "inner") return Phi::inner;
  throw ConfigError("alignment.phi", "unknown similarity '" + s + "'");
}

namespace {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("train.optimizer", "unknown optimizer '" + s + "'");
}

std::string to_string(LrSchedule k) { return k == LrSchedule::constant ? "constant" : "cosine"; }

LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  throw ConfigError("train.lr_schedule", "unknown schedule '" + s + "'");
}

std::string to_string(LambdaSchedule k) {
  switch (k) {
    case LambdaSchedule::constant: return "constant";
    case LambdaSchedule::cosine: return "cosine";
    case LambdaSchedule::exponential: return "exponential";
    case LambdaSchedule::linear: return "linear";
  }
  return "?";
}

LambdaSchedule lambda_schedule_from_string(const std::string& s) {
  if (s == "constant") return LambdaSchedule::constant;
  if (s == "cosine") return LambdaSchedule::cosine;
  if (s == "exponential") return LambdaSchedule::exponential;
  if (s == "linear") return LambdaSchedule::linear;
  throw ConfigError("train.lambda_schedule", "unknown schedule '" + s + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::normalize() {
  stream.seed = seed;
  train.seed = seed;
  backbone.input_dim = stream.input_dim;
}

void ExperimentConfig::validate() const {
  if (stream.seed != seed || train.seed != seed || backbone.input_dim != stream.input_dim)
    throw ConfigError("config", "normalize() must run before validate()");
  stream.validate();
  backbone.validate();
  train.validate(backbone.layers);
  if (pretrain.epochs < 0) throw ConfigError("pretrain.epochs", "must be non-negative");
  if (pretrain.lr <= 0.0) throw ConfigError("pretrain.lr", "must be positive");
  if (pretrain.batch < 1) throw ConfigError("pretrain.batch", "must be positive");
}

json ExperimentConfig::to_json() const {
  json j;
  j["label"] = label;
  j["seed"] = seed;
  j["stream"] = {{"total_classes", stream.total_classes},
                 {"tasks", stream.tasks},
                 {"train_per_class", stream.train_per_class},
                 {"test_per_class", stream.test_per_class},
                 {"input_dim", stream.input_dim},
                 {"cluster_separation", stream.cluster_separation},
                 {"within_class_std", stream.within_class_std},
                 {"base_classes", stream.base_classes},
                 {"csv", stream.csv}};
  j["backbone"] = {{"width", backbone.width},
                   {"layers", backbone.layers},
                   {"adapter_rank", backbone.adapter_rank},
                   {"adapter_targets", backbone.adapter_targets},
                   {"activation", "tanh"}};
  j["pretrain"] = {{"epochs", pretrain.epochs}, {"lr", pretrain.lr}, {"batch", pretrain.batch}};
  j["train"] = {{"epochs", train.epochs},
                {"batch", train.batch},
                {"optimizer", to_string(train.optimizer)},
                {"lr", train.lr},
                {"lr_schedule", to_string(train.lr_schedule)},
                {"lambda", train.lambda},
                {"lambda_schedule", to_string(train.lambda_schedule)}};
  j["alignment"] = {{"strategy", loralab::to_string(train.alignment.strategy)},
                    {"phi", loralab::to_string(train.alignment.phi)},
                    {"normalize_features", train.alignment.normalize_features},
                    {"layer_subset", train.alignment.layer_subset},
                    {"huber_delta", train.alignment.huber_delta}};
  j["recalibration"] = {{"enabled", train.recalibration.enabled},
                        {"samples_per_class", train.recalibration.samples_per_class},
                        {"epochs", train.recalibration.epochs},
                        {"lr", train.recalibration.lr},
                        {"batch", train.recalibration.batch}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    cfg.label = get_or<std::string>(j, "label", cfg.label);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    if (j.contains("stream")) {
      const json& s = j.at("stream");
      cfg.stream.total_classes = get_or(s, "total_classes", cfg.stream.total_classes);
      cfg.stream.tasks = get_or(s, "tasks", cfg.stream.tasks);
      cfg.stream.train_per_class = get_or(s, "train_per_class", cfg.stream.train_per_class);
      cfg.stream.test_per_class = get_or(s, "test_per_class", cfg.stream.test_per_class);
      cfg.stream.input_dim = get_or(s, "input_dim", cfg.stream.input_dim);
      cfg.stream.cluster_separation =
          get_or(s, "cluster_separation", cfg.stream.cluster_separation);
      cfg.stream.within_class_std = get_or(s, "within_class_std", cfg.stream.within_class_std);
      cfg.stream.base_classes = get_or(s, "base_classes", cfg.stream.base_classes);
      cfg.stream.csv = get_or<std::string>(s, "csv", cfg.stream.csv);
    }
    if (j.contains("backbone")) {
      const json& b = j.at("backbone");
      cfg.backbone.width = get_or(b, "width", cfg.backbone.width);
      cfg.backbone.layers = get_or(b, "layers", cfg.backbone.layers);
      cfg.backbone.adapter_rank = get_or(b, "adapter_rank", cfg.backbone.adapter_rank);
      cfg.backbone.adapter_targets =
          get_or(b, "adapter_targets", cfg.backbone.adapter_targets);
      if (b.contains("activation") && b.at("activation").get<std::string>() != "tanh")
        throw ConfigError("backbone.activation", "only tanh is supported");
    }
    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      cfg.pretrain.epochs = get_or(p, "epochs", cfg.pretrain.epochs);
      cfg.pretrain.lr = get_or(p, "lr", cfg.pretrain.lr);
      cfg.pretrain.batch = get_or(p, "batch", cfg.pretrain.batch);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      cfg.train.epochs = get_or(t, "epochs", cfg.train.epochs);
      cfg.train.batch = get_or(t, "batch", cfg.train.batch);
      if (t.contains("optimizer"))
        cfg.train.optimizer = optimizer_from_string(t.at("optimizer").get<std::string>());
      cfg.train.lr = get_or(t, "lr", cfg.train.lr);
      if (t.contains("lr_schedule"))
        cfg.train.lr_schedule = lr_schedule_from_string(t.at("lr_schedule").get<std::string>());
      cfg.train.lambda = get_or(t, "lambda", cfg.train.lambda);
      if (t.contains("lambda_schedule"))
        cfg.train.lambda_schedule =
            lambda_schedule_from_string(t.at("lambda_schedule").get<std::string>());
    }
    if (j.contains("alignment")) {
      const json& a = j.at("alignment");
      if (a.contains("strategy"))
        cfg.train.alignment.strategy = strategy_from_string(a.at("strategy").get<std::string>());
      if (a.contains("phi"))
        cfg.train.alignment.phi = phi_from_string(a.at("phi").get<std::string>());
      cfg.train.alignment.normalize_features =
          get_or(a, "normalize_features", cfg.train.alignment.normalize_features);
      cfg.train.alignment.layer_subset =
          get_or(a, "layer_subset", cfg.train.alignment.layer_subset);
      cfg.train.alignment.huber_delta = get_or(a, "huber_delta", cfg.train.alignment.huber_delta);
    }
    if (j.contains("recalibration")) {
      const json& r = j.at("recalibration");
      cfg.train.recalibration.enabled = get_or(r, "enabled", cfg.train.recalibration.enabled);
      cfg.train.recalibration.samples_per_class =
          get_or(r, "samples_per_class", cfg.train.recalibration.samples_per_class);
      cfg.train.recalibration.epochs = get_or(r, "epochs", cfg.train.recalibration.epochs);
      cfg.train.recalibration.lr = get_or(r, "lr", cfg.train.recalibration.lr);
      cfg.train.recalibration.batch = get_or(r, "batch", cfg.train.recalibration.batch);
    }
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("malformed field: ") + e.what());
  }
  cfg.normalize();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return load_with_overrides(path, {});
}

ExperimentConfig ExperimentConfig::load_with_overrides(const std::string& path,
                                                       const std::vector<std::string>& sets) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    // A report file carries its config echo.
    if (j.contains("config") && j.contains("accuracy_matrix")) j = j.at("config");
  }
  for (const std::string& s : sets) apply_override(j, s);
  return from_json(j);
}

void ExperimentConfig::apply_override(json& j, const std::string& dotted) {
  std::size_t eq = dotted.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set", "expected key=value, got '" + dotted + "'");
  std::string key = dotted.substr(0, eq);
  std::string value = dotted.substr(eq + 1);

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings need no quotes
  }

  json* node = &j;
  std::size_t pos = 0;
  while (true) {
    std::size_t dot = key.find('.', pos);
    std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("--set", "empty path segment in '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      break;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

}  // namespace loralab
