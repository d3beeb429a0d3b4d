// Command-line front end; talks to the engine through the C interface only.

#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "entnas/entnas.h"

namespace {

const char* status_label(entnas_status status) {
  switch (status) {
    case ENTNAS_OK: return "ok";
    case ENTNAS_E_CONTRACT: return "contract error";
    case ENTNAS_E_NUMERIC: return "numeric error";
    case ENTNAS_E_CONFIG: return "config error";
    case ENTNAS_E_FORMAT: return "format error";
    case ENTNAS_E_IO: return "io error";
    default: return "error";
  }
}

int report(entnas_status status) {
  std::fprintf(stderr, "%s: %s\n", status_label(status), entnas_last_error());
  return static_cast<int>(status);
}

std::string out_root_from_env() {
  const char* v = std::getenv("ENTNAS_OUT_ROOT");
  return v ? v : "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("differentiable architecture search with grouped edge budgets (engine ") +
               entnas_version() + ")"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, groups_preset, genotype_path, metrics_path, out_dir;

  CLI::App* search = app.add_subcommand("search", "run a search described by a config file");
  search->add_option("--config", config_path, "run configuration (json)")->required();

  CLI::App* gap = app.add_subcommand("gap-probe", "measure a checkpoint's discretization gap");
  gap->add_option("--checkpoint", checkpoint_path, "checkpoint written by search")->required();
  gap->add_option("--groups", groups_preset, "group preset to derive with")->required();

  CLI::App* retrain = app.add_subcommand("retrain", "train a derived topology from scratch");
  retrain->add_option("--genotype", genotype_path, "genotype file (json)")->required();
  retrain->add_option("--config", config_path, "run configuration (json)")->required();

  CLI::App* plots = app.add_subcommand("export-plots", "render charts from a metrics stream");
  plots->add_option("--metrics", metrics_path, "metrics stream (jsonl)")->required();
  plots->add_option("--out", out_dir, "output directory for the charts")->required();

  CLI11_PARSE(app, argc, argv);

  if (search->parsed()) {
    entnas_run* run = nullptr;
    const entnas_status st = entnas_search_run(config_path.c_str(), out_root_from_env().c_str(), &run);
    if (st != ENTNAS_OK) return report(st);
    std::printf("run %s\n", entnas_run_field(run, "run_id"));
    std::printf("artifacts in %s\n", entnas_run_field(run, "out_dir"));
    std::printf("%s\n", entnas_run_field(run, "summary_json"));
    entnas_run_free(run);
    return 0;
  }
  if (gap->parsed()) {
    char* record = nullptr;
    const entnas_status st = entnas_gap_probe(checkpoint_path.c_str(), groups_preset.c_str(), &record);
    if (st != ENTNAS_OK) return report(st);
    std::printf("%s\n", record);
    entnas_string_free(record);
    return 0;
  }
  if (retrain->parsed()) {
    entnas_run* run = nullptr;
    const entnas_status st =
        entnas_retrain_run(genotype_path.c_str(), config_path.c_str(), out_root_from_env().c_str(), &run);
    if (st != ENTNAS_OK) return report(st);
    std::printf("run %s\n", entnas_run_field(run, "run_id"));
    std::printf("artifacts in %s\n", entnas_run_field(run, "out_dir"));
    std::printf("%s\n", entnas_run_field(run, "report_json"));
    entnas_run_free(run);
    return 0;
  }
  if (plots->parsed()) {
    char* listing = nullptr;
    const entnas_status st = entnas_export_plots(metrics_path.c_str(), out_dir.c_str(), &listing);
    if (st != ENTNAS_OK) return report(st);
    std::printf("%s\n", listing);
    entnas_string_free(listing);
    return 0;
  }
  return 0;
}
