#pragma once

#include <string>
#include <vector>

#include "run/config.hpp"

namespace entnas {

// Files produced by one search run, all inside out_dir.
struct SearchArtifacts {
  std::string out_dir;
  std::string run_id;
  std::string checkpoint_path;  // checkpoint.bin
  std::string genotype_path;    // genotype.json
  std::string metrics_path;     // metrics.jsonl
  std::string summary_path;     // summary.json
  std::string manifest_path;    // manifest.json
  std::string summary_json;     // contents of summary.json, one line
};

// Runs a full search from a config file. out_root is the base directory for
// runs whose config carries no out_dir; empty means "runs". The summary and
// the final metrics record are free of wall-clock data, so identical configs
// produce byte-identical summaries.
SearchArtifacts run_search_command(const std::string& config_path, const std::string& out_root);

// Loads a checkpoint, re-derives the discrete topology under the given group
// preset and measures the discretization gap on the run's own architecture
// split. Writes gap_<preset>.json next to the checkpoint and returns its
// contents.
std::string run_gap_probe_command(const std::string& checkpoint_path, const std::string& preset);

struct RetrainArtifacts {
  std::string out_dir;
  std::string run_id;
  std::string metrics_path;   // retrain_metrics.jsonl
  std::string report_path;    // retrain_report.json
  std::string manifest_path;  // retrain_manifest.json
  std::string report_json;    // contents of retrain_report.json, one line
};

// From-scratch training of a derived topology on the config's full training
// set, evaluated on the held-out stream.
RetrainArtifacts run_retrain_command(const std::string& genotype_path, const std::string& config_path,
                                     const std::string& out_root);

// Renders losses.svg, alpha_evolution.svg and beta_evolution.svg from a
// metrics stream; returns the paths written. Re-exporting is byte-identical.
std::vector<std::string> run_export_plots_command(const std::string& metrics_path, const std::string& out_dir);

}  // namespace entnas
