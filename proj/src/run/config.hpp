#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/data.hpp"
#include "search/search.hpp"

namespace entnas {

// Where the task's samples come from. Exactly one source: a generated
// synthetic stream, or CIFAR-10 binary batches on disk.
struct TaskConfig {
  enum class Kind { Synthetic, Cifar10 };
  Kind kind = Kind::Synthetic;
  // synthetic stream
  int classes = 4;
  int count = 400;
  int eval_count = 200;
  int image_hw = 16;
  // cifar-10 binary batches
  std::string path;       // training batches
  std::string eval_path;  // held-out batches, needed only for retraining
};

// One run, fully described. Defaults give a small synthetic-task search that
// finishes in seconds; see README for the JSON schema.
struct RunConfig {
  TaskConfig task;
  // network
  int cells = 2;
  int channels = 8;
  int num_nodes = 6;
  // search
  int epochs = 30;
  int batch = 16;
  real split_fraction = real(0.5);
  OptimSettings optim;
  // regularization weights; the block weight ramps up linearly by default
  WeightSchedule lambda_c{ScheduleSpec{ScheduleKind::Linear}, 1};
  WeightSchedule lambda_alpha, lambda_beta;
  real beta_multiplier = 4;
  // groups: a preset name, or an explicit list (never both in one file)
  std::string group_preset_name = "balanced-8";
  std::vector<EdgeGroup> explicit_groups;
  // retraining
  int retrain_epochs = 20;
  std::uint64_t seed = 1;
  std::string out_dir;  // empty -> <output root>/<run id>

  int task_classes() const;
  int task_image_hw() const;
};

// Strict parser: unknown keys, wrong types and invalid names are config
// errors carrying the field path. Absent optional fields take defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// The fully resolved configuration (every default expanded) as deterministic
// JSON. Feeds the run id, the checkpoint and the manifest; parsing it back
// reproduces the config exactly.
std::string run_config_to_json(const RunConfig& cfg);

NetworkSpec network_spec(const RunConfig& cfg);
std::vector<EdgeGroup> resolve_groups(const RunConfig& cfg);
SearchSettings search_settings(const RunConfig& cfg);
RetrainSettings retrain_settings(const RunConfig& cfg);

// Task data. The eval set is a held-out stream: a fresh synthetic draw, or
// the configured eval batches for cifar-10.
Dataset load_train_dataset(const RunConfig& cfg);
Dataset load_eval_dataset(const RunConfig& cfg);

}  // namespace entnas
