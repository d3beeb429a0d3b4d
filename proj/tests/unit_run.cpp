// Run configuration schema and the four command pipelines.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "io/container.hpp"
#include "io/metrics.hpp"
#include "run/config.hpp"
#include "run/runner.hpp"

using namespace entnas;

namespace {

const char* kMinimalConfig = R"({"schema_version": 1, "task": {"kind": "synthetic"}})";

// small enough to search in about a second
const char* kTinyConfig = R"({
  "schema_version": 1,
  "task": {"kind": "synthetic", "classes": 4, "count": 128, "eval_count": 64, "image_hw": 8},
  "network": {"cells": 1, "channels": 4},
  "search": {"epochs": 2, "batch": 16},
  "groups": {"preset": "imbalanced-4"},
  "retrain": {"epochs": 0},
  "seed": 9
})";

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_config(const std::filesystem::path& dir, const std::string& text) {
  const std::string path = (dir / "config.json").string();
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void expect_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_run_config(text);
    FAIL(("expected a config error containing " + needle).c_str());
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
  }
}

}  // namespace

TEST_CASE("minimal config takes documented defaults") {
  const RunConfig cfg = parse_run_config(kMinimalConfig);
  CHECK(cfg.task.kind == TaskConfig::Kind::Synthetic);
  CHECK(cfg.task.classes == 4);
  CHECK(cfg.cells == 2);
  CHECK(cfg.channels == 8);
  CHECK(cfg.num_nodes == 6);
  CHECK(cfg.epochs == 30);
  CHECK(cfg.batch == 16);
  CHECK(cfg.split_fraction == real(0.5));
  CHECK(cfg.optim.theta_lr0 == real(0.25));
  CHECK(cfg.optim.arch_lr == real(3e-4));
  CHECK(cfg.lambda_c.control.kind == ScheduleKind::Linear);
  CHECK(cfg.lambda_alpha.control.kind == ScheduleKind::Const);
  CHECK(cfg.lambda_c.scale == 1);
  CHECK(cfg.beta_multiplier == 4);
  CHECK(cfg.group_preset_name == "balanced-8");
  CHECK(cfg.retrain_epochs == 20);
  CHECK(cfg.seed == 1);
  CHECK(cfg.out_dir.empty());
}

TEST_CASE("resolved dump round-trips exactly") {
  const RunConfig cfg = parse_run_config(kTinyConfig);
  const std::string dumped = run_config_to_json(cfg);
  const RunConfig back = parse_run_config(dumped);
  CHECK(run_config_to_json(back) == dumped);
  // defaults are expanded in the dump
  CHECK(dumped.find("theta_momentum") != std::string::npos);
  CHECK(dumped.find("beta_multiplier") != std::string::npos);
  CHECK(dumped.find("\"control\": \"linear\"") != std::string::npos);
}

TEST_CASE("schema violations carry field paths") {
  expect_config_error(R"({"task": {"kind": "synthetic"}})", "schema_version");
  expect_config_error(R"({"schema_version": 2, "task": {"kind": "synthetic"}})", "schema_version");
  expect_config_error(R"({"schema_version": 1})", "task: required");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic"}, "serach": {}})", "serach: unknown key");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "maze"}})", "task.kind");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic", "path": "x"}})",
                      "task.path: unknown key");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "cifar10"}})", "task.path");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic", "image_hw": 10}})",
                      "task.image_hw");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic"}, "network": {"cells": "two"}})",
                      "network.cells: expected an integer");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic"}, "search": {"split_fraction": 1.0}})",
                      "search.split_fraction");
  expect_config_error(
      R"({"schema_version": 1, "task": {"kind": "synthetic"}, "search": {"learning_rate": 0.1}})",
      "search.learning_rate: unknown key");
  expect_config_error(
      R"({"schema_version": 1, "task": {"kind": "synthetic"}, "regularizers": {"lambda_c": {"control": "cosine"}}})",
      "regularizers.lambda_c.control");
  expect_config_error(
      R"({"schema_version": 1, "task": {"kind": "synthetic"}, "regularizers": {"lambda_c": {"scale": -1}}})",
      "regularizers.lambda_c.scale");
  expect_config_error(
      R"({"schema_version": 1, "task": {"kind": "synthetic"}, "groups": {"preset": "balanced-8", "explicit": []}})",
      "not both");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic"}, "groups": {"preset": "balanced-9"}})",
                      "groups.preset");
  expect_config_error(
      R"({"schema_version": 1, "task": {"kind": "synthetic"}, "groups": {"explicit": [{"edges": [0], "k": 0}]}})",
      "groups.explicit[0].k");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic"}, "seed": -4})", "seed: must be >= 0");
  expect_config_error(R"({"schema_version": 1, "task": {"kind": "synthetic"}, "retrain": {"epochs": -1}})",
                      "retrain.epochs");
  expect_config_error("{", "unparseable");
}

TEST_CASE("explicit groups parse and must partition the edge set") {
  // full 14-edge partition on 6 nodes: one group per destination node
  const char* text = R"({
    "schema_version": 1, "task": {"kind": "synthetic"},
    "groups": {"explicit": [
      {"edges": [0, 1], "k": 1},
      {"edges": [2, 3, 4], "k": 1},
      {"edges": [5, 6, 7, 8], "k": 2},
      {"edges": [9, 10, 11, 12, 13], "k": 2}
    ]}
  })";
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.group_preset_name.empty());
  REQUIRE(cfg.explicit_groups.size() == 4);
  CHECK(cfg.explicit_groups[2].k == 2);
  const std::vector<EdgeGroup> groups = resolve_groups(cfg);
  CHECK(groups.size() == 4);

  // dropping an edge breaks the partition
  RunConfig broken = cfg;
  broken.explicit_groups[0].edges = {0};
  CHECK_THROWS_AS(resolve_groups(broken), Error);
}

TEST_CASE("task kind fixes the network's classes and image size") {
  RunConfig synth = parse_run_config(kTinyConfig);
  NetworkSpec spec = network_spec(synth);
  CHECK(spec.classes == 4);
  CHECK(spec.image_hw == 8);
  CHECK(spec.cells == 1);
  CHECK(spec.batch == 16);

  RunConfig cifar = parse_run_config(
      R"({"schema_version": 1, "task": {"kind": "cifar10", "path": "train.bin"}})");
  spec = network_spec(cifar);
  CHECK(spec.classes == 10);
  CHECK(spec.image_hw == 32);
  CHECK(cifar.task.path == "train.bin");
}

TEST_CASE("search settings mirror the config") {
  const RunConfig cfg = parse_run_config(kTinyConfig);
  const SearchSettings s = search_settings(cfg);
  CHECK(s.epochs == 2);
  CHECK(s.seed == 9);
  CHECK(s.groups.size() == 4);
  CHECK(s.beta_multiplier == 4);
  CHECK(s.lambda_c.control.kind == ScheduleKind::Linear);
  const RetrainSettings r = retrain_settings(cfg);
  CHECK(r.epochs == 0);
  CHECK(r.net.classes == 4);
}

TEST_CASE("eval stream is deterministic and disjoint from training data") {
  const RunConfig cfg = parse_run_config(kTinyConfig);
  const Dataset train = load_train_dataset(cfg);
  const Dataset eval1 = load_eval_dataset(cfg);
  const Dataset eval2 = load_eval_dataset(cfg);
  CHECK(train.count() == 128);
  CHECK(eval1.count() == 64);
  REQUIRE(eval1.images.size() == eval2.images.size());
  for (std::size_t i = 0; i < eval1.images.size(); ++i) REQUIRE(eval1.images[i] == eval2.images[i]);
  // same generator, different stream: the first image must differ
  bool differs = false;
  for (std::size_t i = 0; i < eval1.images.size() && i < train.images.size(); ++i)
    if (eval1.images[i] != train.images[i]) differs = true;
  CHECK(differs);

  RunConfig cifar = parse_run_config(
      R"({"schema_version": 1, "task": {"kind": "cifar10", "path": "train.bin"}})");
  CHECK_THROWS_WITH_AS(load_eval_dataset(cifar), doctest::Contains("eval_path"), Error);
}

TEST_CASE("search command writes the full artifact set") {
  const auto dir = fresh_dir("entnas_run_search");
  const std::string config_path = write_config(dir, kTinyConfig);
  const SearchArtifacts art = run_search_command(config_path, (dir / "root").string());

  CHECK(art.out_dir == (dir / "root").string() + "/" + art.run_id);
  for (const std::string* p : {&art.checkpoint_path, &art.genotype_path, &art.metrics_path, &art.summary_path,
                               &art.manifest_path})
    CHECK_MESSAGE(std::filesystem::exists(*p), *p);

  // summary is a single deterministic JSON line mirroring summary.json
  CHECK(slurp(art.summary_path) == art.summary_json + "\n");
  const auto summary = nlohmann::json::parse(art.summary_json);
  CHECK(summary.at("type") == "summary");
  CHECK(summary.at("run") == art.run_id);
  CHECK(summary.at("epochs") == 2);
  CHECK(summary.at("alpha_max").at("normal").size() == 14);
  CHECK(summary.at("beta_mass").at("normal").size() == 4);
  CHECK(summary.at("gap").contains("drop"));

  // the metrics stream holds every paired step plus the summary line
  const MetricsSeries series = read_metrics(art.metrics_path);
  CHECK(series.epochs == std::vector<int>{0, 1});
  CHECK(series.alpha_max[1].size() == 14);

  // manifest embeds the resolved config; replaying it reproduces the run id
  const auto manifest = nlohmann::json::parse(slurp(art.manifest_path));
  CHECK(manifest.at("command") == "search");
  const RunConfig replay = parse_run_config(manifest.at("config").dump());
  CHECK(make_run_id(run_config_to_json(replay), replay.seed) == art.run_id);

  // checkpoint stores the same resolved config and the final topology
  const Checkpoint ck = load_checkpoint(art.checkpoint_path);
  CHECK(ck.config_json == run_config_to_json(replay));
  CHECK(ck.seed == 9);
  CHECK(ck.spec.cells == 1);
  CHECK(ck.groups.size() == 4);
  CHECK(ck.arch.has(kNormal));
  const Genotype geno = genotype_from_json(slurp(art.genotype_path));
  CHECK(geno.kept[kNormal].size() == 4);
}

TEST_CASE("gap probe command reuses the checkpointed run's data") {
  const auto dir = fresh_dir("entnas_run_gap");
  const std::string config_path = write_config(dir, kTinyConfig);
  const SearchArtifacts art = run_search_command(config_path, (dir / "root").string());

  const std::string record = run_gap_probe_command(art.checkpoint_path, "imbalanced-3");
  const auto j = nlohmann::json::parse(record);
  CHECK(j.at("type") == "gap_probe");
  CHECK(j.at("preset") == "imbalanced-3");
  CHECK(j.at("run") == art.run_id);
  CHECK(j.at("genotype").at("cells").at("normal").size() == 3);
  CHECK(j.at("report").at("continuous_acc").get<double>() >= 0.0);

  const std::string gap_path = (std::filesystem::path(art.checkpoint_path).parent_path() /
                                "gap_imbalanced-3.json").string();
  CHECK(slurp(gap_path) == record + "\n");

  CHECK_THROWS_WITH_AS(run_gap_probe_command(art.checkpoint_path, "balanced-9"), doctest::Contains("preset"), Error);
}

TEST_CASE("retrain command trains a genotype and reports held-out accuracy") {
  const auto dir = fresh_dir("entnas_run_retrain");
  const std::string config_path = write_config(dir, kTinyConfig);
  const SearchArtifacts art = run_search_command(config_path, (dir / "root").string());

  const RetrainArtifacts rt = run_retrain_command(art.genotype_path, config_path, (dir / "root").string());
  CHECK(rt.run_id != art.run_id);  // the genotype feeds the retrain run id
  CHECK(std::filesystem::exists(rt.report_path));
  CHECK(std::filesystem::exists(rt.manifest_path));
  const auto report = nlohmann::json::parse(rt.report_json);
  CHECK(report.at("type") == "retrain_summary");
  CHECK(report.at("epochs") == 0);
  CHECK(report.at("final_mean_loss").is_null());
  const double acc = report.at("eval_accuracy").get<double>();
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  const auto manifest = nlohmann::json::parse(slurp(rt.manifest_path));
  CHECK(manifest.at("command") == "retrain");
  CHECK(manifest.at("genotype").at("num_nodes") == 6);
}

TEST_CASE("plot export is byte-stable and needs step records") {
  const auto dir = fresh_dir("entnas_run_plots");
  const std::string config_path = write_config(dir, kTinyConfig);
  const SearchArtifacts art = run_search_command(config_path, (dir / "root").string());

  const auto first = run_export_plots_command(art.metrics_path, (dir / "plots").string());
  REQUIRE(first.size() == 3);
  std::vector<std::string> bytes;
  for (const std::string& p : first) bytes.push_back(slurp(p));
  const auto second = run_export_plots_command(art.metrics_path, (dir / "plots").string());
  for (std::size_t i = 0; i < 3; ++i) CHECK(slurp(second[i]) == bytes[i]);
  CHECK(bytes[1].find("edge 13") != std::string::npos);
  CHECK(bytes[2].find("group 3") != std::string::npos);

  // a retrain stream has no step records to plot
  const RetrainArtifacts rt = run_retrain_command(art.genotype_path, config_path, (dir / "root").string());
  CHECK_THROWS_WITH_AS(run_export_plots_command(rt.metrics_path, (dir / "plots2").string()),
                       doctest::Contains("no step records"), Error);
}
