#include "loralab/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace loralab {

namespace fs = std::filesystem;
using nlohmann::json;

void StreamSpec::validate() const {
  if (total_classes <= 0) throw ConfigError("stream.total_classes", "must be positive");
  if (tasks <= 0) throw ConfigError("stream.tasks", "must be positive");
  if (total_classes % tasks != 0)
    throw ConfigError("stream.tasks", "total_classes must be divisible by tasks");
  if (train_per_class <= 0) throw ConfigError("stream.train_per_class", "must be positive");
  if (test_per_class <= 0) throw ConfigError("stream.test_per_class", "must be positive");
  if (input_dim <= 0) throw ConfigError("stream.input_dim", "must be positive");
  if (base_classes < 0) throw ConfigError("stream.base_classes", "must be non-negative");
  if (cluster_separation <= 0.0)
    throw ConfigError("stream.cluster_separation", "must be positive");
  if (within_class_std <= 0.0) throw ConfigError("stream.within_class_std", "must be positive");
}

namespace {

Vector sphere_point(int dim, double radius, Rng& rng) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.next_gaussian();
  double n = v.norm();
  if (n == 0.0) {
    v.setZero();
    v[0] = 1.0;
    n = 1.0;
  }
  return v * (radius / n);
}

// Samples for one class; substream keyed by class id keeps generation
// independent of class order.
void fill_class(int class_id, const StreamSpec& spec, Rng data_rng,
                std::vector<Sample>& train, std::vector<Sample>& test) {
  Rng rng = data_rng.substream(static_cast<std::uint64_t>(class_id));
  Vector mean = sphere_point(spec.input_dim, spec.cluster_separation, rng);
  auto draw = [&](std::vector<Sample>& out, int count) {
    for (int i = 0; i < count; ++i) {
      Vector x(spec.input_dim);
      for (int d = 0; d < spec.input_dim; ++d)
        x[d] = mean[d] + spec.within_class_std * rng.next_gaussian();
      out.push_back({std::move(x), class_id});
    }
  };
  draw(train, spec.train_per_class);
  draw(test, spec.test_per_class);
}

}  // namespace

std::vector<std::vector<int>> split_classes(std::vector<int> class_ids, int tasks, Rng& rng) {
  if (tasks <= 0 || class_ids.size() % static_cast<std::size_t>(tasks) != 0)
    throw ConfigError("stream.tasks", "class count must be divisible by task count");
  rng.shuffle(class_ids);
  std::size_t per_task = class_ids.size() / static_cast<std::size_t>(tasks);
  std::vector<std::vector<int>> out(tasks);
  for (int t = 0; t < tasks; ++t)
    out[t].assign(class_ids.begin() + t * per_task, class_ids.begin() + (t + 1) * per_task);
  return out;
}

StreamData make_stream(const StreamSpec& spec) {
  spec.validate();
  Rng data_rng(spec.seed, "data");

  StreamData stream;
  stream.base.task = 0;
  for (int c = 0; c < spec.base_classes; ++c) {
    int class_id = spec.total_classes + c;
    stream.base.labels.push_back(class_id);
    fill_class(class_id, spec, data_rng, stream.base.train, stream.base.test);
  }

  std::vector<int> stream_classes(spec.total_classes);
  for (int c = 0; c < spec.total_classes; ++c) stream_classes[c] = c;
  Rng shuffle_rng = data_rng.substream(0xC1A55ull);
  auto label_sets = split_classes(std::move(stream_classes), spec.tasks, shuffle_rng);

  for (int t = 0; t < spec.tasks; ++t) {
    TaskData task;
    task.task = t + 1;
    task.labels = label_sets[t];
    for (int class_id : task.labels)
      fill_class(class_id, spec, data_rng, task.train, task.test);
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

namespace {

std::vector<double> parse_row(const std::string& line, long line_no) {
  std::vector<double> row;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                   : comma - pos);
    if (cell.empty()) throw ParseError("empty field", line_no);
    char* end = nullptr;
    double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0')
      throw ParseError("non-numeric field '" + cell + "'", line_no);
    row.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return row;
}

struct CsvRows {
  std::map<int, std::vector<Vector>> by_label;
  int dim = 0;
};

CsvRows read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++line_no;
  if (line.rfind("label", 0) != 0)
    throw ParseError("unknown header, expected 'label,feat_1,...'", 1);

  CsvRows rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> vals = parse_row(line, line_no);
    if (vals.size() < 2) throw ParseError("row needs a label and at least one feature", line_no);
    int k = static_cast<int>(vals.size()) - 1;
    if (rows.dim == 0)
      rows.dim = k;
    else if (rows.dim != k)
      throw ParseError("ragged row: expected " + std::to_string(rows.dim) + " features", line_no);
    double label_real = vals[0];
    int label = static_cast<int>(label_real);
    if (static_cast<double>(label) != label_real)
      throw ParseError("label must be an integer", line_no);
    Vector x(k);
    for (int i = 0; i < k; ++i) x[i] = vals[i + 1];
    rows.by_label[label].push_back(std::move(x));
  }
  if (rows.by_label.empty()) throw ParseError("no data rows", line_no);
  return rows;
}

}  // namespace

std::vector<TaskData> load_csv(const std::string& path, int tasks, std::uint64_t seed) {
  CsvRows rows = read_csv_rows(path);

  Rng data_rng(seed, "data");
  std::map<int, std::pair<std::vector<Vector>, std::vector<Vector>>> split;  // train, test
  for (auto& [label, feats] : rows.by_label) {
    std::vector<std::size_t> order(feats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = data_rng.substream(static_cast<std::uint64_t>(label) ^ 0x5911Dull);
    rng.shuffle(order);
    std::size_t n_train = static_cast<std::size_t>(feats.size() * 0.8);
    auto& [train, test] = split[label];
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_train ? train : test).push_back(feats[order[i]]);
  }

  std::vector<int> class_ids;
  for (auto& [label, unused] : split) class_ids.push_back(label);
  if (tasks <= 0 || class_ids.size() % static_cast<std::size_t>(tasks) != 0)
    throw ConfigError("stream.tasks",
                      "CSV class count " + std::to_string(class_ids.size()) +
                          " not divisible by task count " + std::to_string(tasks));
  Rng shuffle_rng = data_rng.substream(0xC1A55ull);
  auto label_sets = split_classes(class_ids, tasks, shuffle_rng);

  std::vector<TaskData> out;
  for (int t = 0; t < tasks; ++t) {
    TaskData task;
    task.task = t + 1;
    task.labels = label_sets[t];
    for (int label : task.labels) {
      for (auto& x : split[label].first) task.train.push_back({x, label});
      for (auto& x : split[label].second) task.test.push_back({x, label});
    }
    out.push_back(std::move(task));
  }
  return out;
}

namespace {

void write_samples_csv(const std::string& path, const std::vector<Sample>& samples, int dim) {
  std::ofstream out(path);
  out << "label";
  for (int i = 1; i <= dim; ++i) out << ",feat_" << i;
  out << "\n";
  for (const Sample& s : samples) {
    out << s.label;
    for (int i = 0; i < dim; ++i) out << "," << format_real(s.x[i]);
    out << "\n";
  }
}

std::vector<Sample> read_samples_csv(const std::string& path, const std::vector<int>& labels) {
  CsvRows rows = read_csv_rows(path);
  std::vector<Sample> out;
  // Preserve per-class file order; labels appear grouped as exported.
  for (int label : labels) {
    auto it = rows.by_label.find(label);
    if (it == rows.by_label.end())
      throw ParseError("manifest label " + std::to_string(label) + " missing in " + path);
    for (auto& x : it->second) out.push_back({x, label});
  }
  return out;
}

}  // namespace

std::string export_stream(const StreamData& stream, const std::string& dir) {
  fs::create_directories(dir);
  int dim = 0;
  if (!stream.tasks.empty() && !stream.tasks.front().train.empty())
    dim = static_cast<int>(stream.tasks.front().train.front().x.size());

  json manifest;
  manifest["input_dim"] = dim;
  manifest["tasks"] = json::array();
  for (const TaskData& task : stream.tasks) {
    char train_name[32], test_name[32];
    std::snprintf(train_name, sizeof(train_name), "task%02d_train.csv", task.task);
    std::snprintf(test_name, sizeof(test_name), "task%02d_test.csv", task.task);
    write_samples_csv((fs::path(dir) / train_name).string(), task.train, dim);
    write_samples_csv((fs::path(dir) / test_name).string(), task.test, dim);
    json entry;
    entry["index"] = task.task;
    entry["labels"] = task.labels;
    entry["train"] = train_name;
    entry["test"] = test_name;
    manifest["tasks"].push_back(entry);
  }
  std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
  return manifest_path;
}

std::vector<TaskData> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  fs::path base = fs::path(path).parent_path();
  std::vector<TaskData> out;
  for (const json& entry : manifest.at("tasks")) {
    TaskData task;
    task.task = entry.at("index").get<int>();
    task.labels = entry.at("labels").get<std::vector<int>>();
    task.train = read_samples_csv((base / entry.at("train").get<std::string>()).string(),
                                  task.labels);
    task.test = read_samples_csv((base / entry.at("test").get<std::string>()).string(),
                                 task.labels);
    out.push_back(std::move(task));
  }
  if (out.empty()) throw ParseError("manifest lists no tasks");
  return out;
}

StreamData load_dataset(const StreamSpec& spec) {
  if (spec.csv.empty()) return make_stream(spec);
  StreamData stream;
  if (spec.csv.size() >= 5 && spec.csv.substr(spec.csv.size() - 5) == ".json")
    stream.tasks = load_manifest(spec.csv);
  else
    stream.tasks = load_csv(spec.csv, spec.tasks, spec.seed);
  stream.base.task = 0;  // external datasets carry no pretraining split
  return stream;
}

std::uint64_t dataset_hash(const std::vector<TaskData>& tasks) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001B3ull;
    }
  };
  auto mix_samples = [&](const std::vector<Sample>& samples) {
    for (const Sample& s : samples) {
      mix_bytes(&s.label, sizeof(s.label));
      mix_bytes(s.x.data(), sizeof(double) * static_cast<std::size_t>(s.x.size()));
    }
  };
  for (const TaskData& t : tasks) {
    mix_bytes(&t.task, sizeof(t.task));
    for (int label : t.labels) mix_bytes(&label, sizeof(label));
    mix_samples(t.train);
    mix_samples(t.test);
  }
  return h;
}

}  // namespace loralab
