#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "search/search.hpp"

namespace entnas {

// Deterministic run identifier: a 64-bit FNV-1a digest of the resolved
// configuration text and the seed, hex-encoded.
std::string make_run_id(const std::string& config_json, std::uint64_t seed);

// Append-only line-delimited metrics stream; every line is one
// self-contained JSON record tagged with the run id.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, std::string run_id);

  // One record per paired search step, including the current selection-mass
  // metrics of every present cell type.
  void step_record(const StepInfo& info, double wall_ms);
  void retrain_record(int epoch, int step, real lr, real loss, double wall_ms);
  void raw_record(const std::string& json_object_line);

  const std::string& run_id() const { return run_id_; }

 private:
  std::ofstream out_;
  std::string run_id_;
};

// Per-epoch aggregates recovered from a metrics stream: epoch-mean losses
// from the architecture side and last-step selection masses.
struct MetricsSeries {
  std::vector<int> epochs;
  std::vector<real> class_loss, op_entropy, edge_loss, total;
  std::vector<std::vector<real>> alpha_max;   // [epoch][edge], normal cell type
  std::vector<std::vector<real>> beta_mass;   // [epoch][group], normal cell type
};

// Parses only "step" records; format errors name the line number. Errors out
// on a stream with no step records.
MetricsSeries read_metrics(const std::string& path);

}  // namespace entnas
