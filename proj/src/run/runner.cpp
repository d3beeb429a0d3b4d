#include "run/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "common.hpp"
#include "discretize/discretize.hpp"
#include "io/container.hpp"
#include "io/metrics.hpp"
#include "io/svg.hpp"

namespace entnas {

namespace {

using ordered_json = nlohmann::ordered_json;

const char* kTypeTag[kNumCellTypes] = {"normal", "reduce"};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::string pick_out_dir(const RunConfig& cfg, const std::string& out_root, const std::string& run_id) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  const std::string root = out_root.empty() ? "runs" : out_root;
  return root + "/" + run_id;
}

class WallClock {
 public:
  double ms() const { return std::chrono::duration<double, std::milli>(clock::now() - start_).count(); }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_ = clock::now();
};

}  // namespace

SearchArtifacts run_search_command(const std::string& config_path, const std::string& out_root) {
  const RunConfig cfg = load_run_config(config_path);
  const std::string resolved = run_config_to_json(cfg);

  SearchArtifacts art;
  art.run_id = make_run_id(resolved, cfg.seed);
  art.out_dir = pick_out_dir(cfg, out_root, art.run_id);
  std::filesystem::create_directories(art.out_dir);
  art.checkpoint_path = art.out_dir + "/checkpoint.bin";
  art.genotype_path = art.out_dir + "/genotype.json";
  art.metrics_path = art.out_dir + "/metrics.jsonl";
  art.summary_path = art.out_dir + "/summary.json";
  art.manifest_path = art.out_dir + "/manifest.json";

  ordered_json manifest;
  manifest["run_id"] = art.run_id;
  manifest["command"] = "search";
  manifest["config"] = ordered_json::parse(resolved);
  write_text(art.manifest_path, manifest.dump(2) + "\n");

  const Dataset data = load_train_dataset(cfg);
  const Normalizer norm = compute_normalizer(data);
  const SearchSettings settings = search_settings(cfg);

  std::filesystem::remove(art.metrics_path);  // one clean stream per run
  MetricsWriter metrics(art.metrics_path, art.run_id);
  const WallClock wall;
  const SearchResult result =
      run_search(settings, data, norm, [&](const StepInfo& info) { metrics.step_record(info, wall.ms()); });

  Checkpoint ck;
  ck.config_json = resolved;
  ck.seed = cfg.seed;
  ck.rng_state = "master-seed:" + std::to_string(cfg.seed);
  ck.spec = settings.net;
  ck.groups = settings.groups;
  ck.arch = result.arch;
  ck.params = result.params;
  ck.buffers = result.buffers;
  ck.norm = norm;
  save_checkpoint(ck, art.checkpoint_path);

  write_text(art.genotype_path, genotype_to_json(result.genotype));

  // probe the gap on the architecture split the arch parameters were fit on
  const auto splits = split_dataset(data, cfg.split_fraction, cfg.seed);
  const GapReport gap =
      gap_probe(settings.net, result.arch, result.genotype, result.params, result.buffers, splits.second, norm);

  ordered_json summary;
  summary["type"] = "summary";
  summary["run"] = art.run_id;
  summary["epochs"] = cfg.epochs;
  const LossReport& last = result.epoch_losses.back();
  ordered_json fin;
  fin["class"] = last.class_loss;
  fin["op_entropy"] = last.op_entropy;
  fin["edge"] = last.edge_loss;
  fin["total"] = last.total;
  summary["final"] = fin;
  for (int t = 0; t < kNumCellTypes; ++t) {
    if (!result.arch.has(t)) continue;
    const CellTopology topo = CellTopology::make(settings.net.num_nodes);
    summary["alpha_max"][kTypeTag[t]] = edge_max_op_mass(result.arch, t);
    summary["beta_mass"][kTypeTag[t]] = group_topk_mass(result.arch, topo, settings.groups, t);
  }
  summary["genotype"] = "genotype.json";
  summary["gap"] = ordered_json::parse(gap_report_to_json(gap));
  summary["warnings"] = result.warnings;
  art.summary_json = summary.dump();
  write_text(art.summary_path, art.summary_json + "\n");
  metrics.raw_record(art.summary_json);
  return art;
}

std::string run_gap_probe_command(const std::string& checkpoint_path, const std::string& preset) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (!is_group_preset(preset)) fail(ErrorKind::Config, "gap-probe: unknown group preset \"" + preset + "\"");
  const RunConfig cfg = parse_run_config(ck.config_json);
  const CellTopology topo = CellTopology::make(ck.spec.num_nodes);
  const std::vector<EdgeGroup> groups = group_preset(preset, topo);
  std::vector<std::string> warnings;
  const Genotype geno = derive_genotype(ck.arch, topo, groups, &warnings);

  // same architecture split the checkpointed run trained its logits on
  const Dataset data = load_train_dataset(cfg);
  const auto splits = split_dataset(data, cfg.split_fraction, cfg.seed);
  const GapReport gap = gap_probe(ck.spec, ck.arch, geno, ck.params, ck.buffers, splits.second, ck.norm);

  ordered_json out;
  out["type"] = "gap_probe";
  out["run"] = make_run_id(ck.config_json, ck.seed);
  out["preset"] = preset;
  out["report"] = ordered_json::parse(gap_report_to_json(gap));
  out["genotype"] = ordered_json::parse(genotype_to_json(geno));
  out["warnings"] = warnings;
  const std::string line = out.dump();

  const std::filesystem::path dir = std::filesystem::path(checkpoint_path).parent_path();
  write_text((dir / ("gap_" + preset + ".json")).string(), line + "\n");
  return line;
}

RetrainArtifacts run_retrain_command(const std::string& genotype_path, const std::string& config_path,
                                     const std::string& out_root) {
  const RunConfig cfg = load_run_config(config_path);
  const std::string geno_text = read_text(genotype_path);
  const Genotype geno = genotype_from_json(geno_text);
  const std::string resolved = run_config_to_json(cfg);

  RetrainArtifacts art;
  // the topology is part of the experiment, so it feeds the run id too
  art.run_id = make_run_id(resolved + geno_text, cfg.seed);
  art.out_dir = pick_out_dir(cfg, out_root, art.run_id);
  std::filesystem::create_directories(art.out_dir);
  art.metrics_path = art.out_dir + "/retrain_metrics.jsonl";
  art.report_path = art.out_dir + "/retrain_report.json";
  art.manifest_path = art.out_dir + "/retrain_manifest.json";

  ordered_json manifest;
  manifest["run_id"] = art.run_id;
  manifest["command"] = "retrain";
  manifest["config"] = ordered_json::parse(resolved);
  manifest["genotype"] = ordered_json::parse(genotype_to_json(geno));
  write_text(art.manifest_path, manifest.dump(2) + "\n");

  const Dataset train = load_train_dataset(cfg);
  const Dataset eval = load_eval_dataset(cfg);
  const Normalizer norm = compute_normalizer(train);
  const RetrainSettings settings = retrain_settings(cfg);

  std::filesystem::remove(art.metrics_path);
  MetricsWriter metrics(art.metrics_path, art.run_id);
  const WallClock wall;
  const RetrainResult result = train_subnetwork(geno, settings, train, eval, norm,
                                                [&](int epoch, int step, real lr, real loss) {
                                                  metrics.retrain_record(epoch, step, lr, loss, wall.ms());
                                                });

  ordered_json report;
  report["type"] = "retrain_summary";
  report["run"] = art.run_id;
  report["epochs"] = settings.epochs;
  report["eval_accuracy"] = result.eval_accuracy;
  if (result.epoch_mean_loss.empty())
    report["final_mean_loss"] = nullptr;
  else
    report["final_mean_loss"] = result.epoch_mean_loss.back();
  art.report_json = report.dump();
  write_text(art.report_path, art.report_json + "\n");
  metrics.raw_record(art.report_json);
  return art;
}

std::vector<std::string> run_export_plots_command(const std::string& metrics_path, const std::string& out_dir) {
  const MetricsSeries series = read_metrics(metrics_path);
  std::filesystem::create_directories(out_dir);

  std::vector<std::string> written;
  const std::vector<ChartSeries> losses = {
      {"class", series.class_loss},
      {"op entropy", series.op_entropy},
      {"edge", series.edge_loss},
      {"total", series.total},
  };
  const std::string losses_path = out_dir + "/losses.svg";
  write_text(losses_path, line_chart_svg("architecture-split losses", "epoch", "loss", series.epochs, losses));
  written.push_back(losses_path);

  auto transpose = [&](const std::vector<std::vector<real>>& rows, const char* stem) {
    const std::size_t width = rows.front().size();
    std::vector<ChartSeries> cols(width);
    for (std::size_t c = 0; c < width; ++c) cols[c].label = stem + std::to_string(c);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != width)
        fail(ErrorKind::Format, metrics_path + ": inconsistent series length at epoch index " + std::to_string(r));
      for (std::size_t c = 0; c < width; ++c) cols[c].y.push_back(rows[r][c]);
    }
    return cols;
  };

  const std::string alpha_path = out_dir + "/alpha_evolution.svg";
  write_text(alpha_path, line_chart_svg("strongest operation mass per edge", "epoch", "max softmax mass",
                                        series.epochs, transpose(series.alpha_max, "edge ")));
  written.push_back(alpha_path);

  const std::string beta_path = out_dir + "/beta_evolution.svg";
  write_text(beta_path, line_chart_svg("kept-edge mass per group", "epoch", "top-k group mass", series.epochs,
                                       transpose(series.beta_mass, "group ")));
  written.push_back(beta_path);
  return written;
}

}  // namespace entnas
