#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loralab/linalg.hpp"
#include "loralab/rng.hpp"

namespace loralab {

struct Sample {
  Vector x;
  int label = 0;
};

/// One task of a class-incremental stream: disjoint label set with its
/// train/test split.
struct TaskData {
  int task = 0;  // 1-based
  std::vector<int> labels;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct StreamSpec {
  int total_classes = 40;
  int tasks = 10;
  int train_per_class = 50;
  int test_per_class = 20;
  int input_dim = 16;
  double cluster_separation = 6.0;
  double within_class_std = 1.0;
  int base_classes = 8;  // disjoint pretraining classes
  std::uint64_t seed = 1;
  std::string csv;  // optional: path to a raw CSV or an exported manifest.json

  void validate() const;
};

struct StreamData {
  TaskData base;  // task 0, pretraining classes
  std::vector<TaskData> tasks;
};

/// Synthetic stream: one isotropic Gaussian cluster per class, mean uniform
/// on the sphere of radius cluster_separation. Stream class ids are
/// 0..total_classes-1; base class ids follow after them.
StreamData make_stream(const StreamSpec& spec);

/// Uniform shuffle then chunk into `tasks` equal disjoint label sets.
std::vector<std::vector<int>> split_classes(std::vector<int> class_ids, int tasks, Rng& rng);

/// Raw CSV ingestion: header `label,feat_1,...,feat_k`, rows grouped by
/// label, 0.8 train fraction per class under the "data" stream, then
/// partitioned into `tasks` disjoint tasks.
std::vector<TaskData> load_csv(const std::string& path, int tasks, std::uint64_t seed);

/// Loads an exported dataset exactly as listed in its manifest.json
/// (no re-splitting), so a run on exported data matches the synthetic run.
std::vector<TaskData> load_manifest(const std::string& path);

/// Synthetic generation or CSV/manifest ingestion, per spec.csv.
StreamData load_dataset(const StreamSpec& spec);

/// Writes one train and one test CSV per task plus manifest.json; returns
/// the manifest path.
std::string export_stream(const StreamData& stream, const std::string& dir);

/// Order-sensitive FNV-1a hash over the exact bytes of all task data.
std::uint64_t dataset_hash(const std::vector<TaskData>& tasks);

}  // namespace loralab
