#include "entnas/entnas.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <string>

#include "common.hpp"
#include "run/runner.hpp"

struct entnas_run {
  std::map<std::string, std::string> fields;
};

namespace {

thread_local std::string g_last_error;

entnas_status status_of(entnas::ErrorKind kind) {
  switch (kind) {
    case entnas::ErrorKind::Contract: return ENTNAS_E_CONTRACT;
    case entnas::ErrorKind::Numeric: return ENTNAS_E_NUMERIC;
    case entnas::ErrorKind::Config: return ENTNAS_E_CONFIG;
    case entnas::ErrorKind::Format: return ENTNAS_E_FORMAT;
    case entnas::ErrorKind::Io: return ENTNAS_E_IO;
  }
  return ENTNAS_E_UNKNOWN;
}

template <typename Fn>
entnas_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ENTNAS_OK;
  } catch (const entnas::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ENTNAS_E_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown failure";
    return ENTNAS_E_UNKNOWN;
  }
}

entnas_status require(bool ok, const char* what) {
  if (ok) return ENTNAS_OK;
  g_last_error = std::string("null argument: ") + what;
  return ENTNAS_E_CONTRACT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* entnas_last_error(void) { return g_last_error.c_str(); }

const char* entnas_version(void) { return "1.0.0"; }

entnas_status entnas_search_run(const char* config_path, const char* out_root, entnas_run** out_run) {
  if (entnas_status st = require(config_path && out_run, "config_path/out_run"); st != ENTNAS_OK) return st;
  *out_run = nullptr;
  return guarded([&] {
    const entnas::SearchArtifacts art = entnas::run_search_command(config_path, out_root ? out_root : "");
    auto* run = new entnas_run;
    run->fields = {
        {"out_dir", art.out_dir},       {"run_id", art.run_id},       {"checkpoint", art.checkpoint_path},
        {"genotype", art.genotype_path}, {"metrics", art.metrics_path}, {"summary", art.summary_path},
        {"manifest", art.manifest_path}, {"summary_json", art.summary_json},
    };
    *out_run = run;
  });
}

entnas_status entnas_retrain_run(const char* genotype_path, const char* config_path, const char* out_root,
                                 entnas_run** out_run) {
  if (entnas_status st = require(genotype_path && config_path && out_run, "genotype_path/config_path/out_run");
      st != ENTNAS_OK)
    return st;
  *out_run = nullptr;
  return guarded([&] {
    const entnas::RetrainArtifacts art =
        entnas::run_retrain_command(genotype_path, config_path, out_root ? out_root : "");
    auto* run = new entnas_run;
    run->fields = {
        {"out_dir", art.out_dir},       {"run_id", art.run_id},     {"metrics", art.metrics_path},
        {"report", art.report_path},    {"manifest", art.manifest_path}, {"report_json", art.report_json},
    };
    *out_run = run;
  });
}

const char* entnas_run_field(const entnas_run* run, const char* name) {
  if (!run || !name) return nullptr;
  auto it = run->fields.find(name);
  return it == run->fields.end() ? nullptr : it->second.c_str();
}

void entnas_run_free(entnas_run* run) { delete run; }

entnas_status entnas_gap_probe(const char* checkpoint_path, const char* preset, char** out_record) {
  if (entnas_status st = require(checkpoint_path && preset, "checkpoint_path/preset"); st != ENTNAS_OK) return st;
  return guarded([&] {
    const std::string record = entnas::run_gap_probe_command(checkpoint_path, preset);
    if (out_record) *out_record = dup_string(record);
  });
}

entnas_status entnas_export_plots(const char* metrics_path, const char* out_dir, char** out_listing) {
  if (entnas_status st = require(metrics_path && out_dir, "metrics_path/out_dir"); st != ENTNAS_OK) return st;
  return guarded([&] {
    const std::vector<std::string> paths = entnas::run_export_plots_command(metrics_path, out_dir);
    if (out_listing) {
      std::string joined;
      for (const std::string& p : paths) {
        if (!joined.empty()) joined += "\n";
        joined += p;
      }
      *out_listing = dup_string(joined);
    }
  });
}

void entnas_string_free(char* s) { std::free(s); }

}  // extern "C"
