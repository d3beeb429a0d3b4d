#include "run/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "common.hpp"

namespace entnas {

namespace {

using ordered_json = nlohmann::ordered_json;

// eval sets come from their own seed stream so they never alias training data
constexpr std::uint64_t kEvalSeedStream = 0x45;

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  fail(ErrorKind::Config, "config: " + path + ": " + msg);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const ordered_json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) bad(join(path, it.key()), "unknown key");
  }
}

const ordered_json* maybe(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

int get_int(const ordered_json& j, const char* key, const std::string& path, int fallback) {
  const ordered_json* v = maybe(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) bad(join(path, key), "expected an integer");
  return v->get<int>();
}

real get_real(const ordered_json& j, const char* key, const std::string& path, real fallback) {
  const ordered_json* v = maybe(j, key);
  if (!v) return fallback;
  if (!v->is_number()) bad(join(path, key), "expected a number");
  return v->get<real>();
}

std::string get_string(const ordered_json& j, const char* key, const std::string& path, std::string fallback) {
  const ordered_json* v = maybe(j, key);
  if (!v) return fallback;
  if (!v->is_string()) bad(join(path, key), "expected a string");
  return v->get<std::string>();
}

std::uint64_t get_u64(const ordered_json& j, const char* key, const std::string& path, std::uint64_t fallback) {
  const ordered_json* v = maybe(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) bad(join(path, key), "expected an integer");
  if (!v->is_number_unsigned() && v->get<std::int64_t>() < 0) bad(join(path, key), "must be >= 0");
  return v->get<std::uint64_t>();
}

WeightSchedule parse_schedule(const ordered_json& j, const std::string& path, WeightSchedule value) {
  if (!j.is_object()) bad(path, "expected an object");
  check_keys(j, path, {"control", "scale", "activation_epoch", "k", "t0"});
  if (const ordered_json* v = maybe(j, "control")) {
    if (!v->is_string()) bad(join(path, "control"), "expected a string");
    try {
      value.control.kind = schedule_kind_from_name(v->get<std::string>());
    } catch (const Error&) {
      bad(join(path, "control"),
          "unknown control function \"" + v->get<std::string>() + "\" (const, linear, exp, log, step)");
    }
  }
  value.scale = get_real(j, "scale", path, value.scale);
  value.control.activation_epoch = get_int(j, "activation_epoch", path, value.control.activation_epoch);
  value.control.k = get_real(j, "k", path, value.control.k);
  value.control.t0 = get_real(j, "t0", path, value.control.t0);
  if (value.scale < 0) bad(join(path, "scale"), "must be >= 0");
  if (value.control.activation_epoch < 0) bad(join(path, "activation_epoch"), "must be >= 0");
  return value;
}

TaskConfig parse_task(const ordered_json& j) {
  const std::string path = "task";
  if (!j.is_object()) bad(path, "expected an object");
  TaskConfig task;
  const std::string kind = get_string(j, "kind", path, "");
  if (kind == "synthetic") {
    task.kind = TaskConfig::Kind::Synthetic;
    check_keys(j, path, {"kind", "classes", "count", "eval_count", "image_hw"});
    task.classes = get_int(j, "classes", path, task.classes);
    task.count = get_int(j, "count", path, task.count);
    task.eval_count = get_int(j, "eval_count", path, task.eval_count);
    task.image_hw = get_int(j, "image_hw", path, task.image_hw);
    if (task.classes < 2) bad(join(path, "classes"), "must be >= 2");
    if (task.count < 2) bad(join(path, "count"), "must be >= 2");
    if (task.eval_count < 1) bad(join(path, "eval_count"), "must be >= 1");
    if (task.image_hw < 4 || task.image_hw % 4 != 0)
      bad(join(path, "image_hw"), "must be a positive multiple of 4");
  } else if (kind == "cifar10") {
    task.kind = TaskConfig::Kind::Cifar10;
    check_keys(j, path, {"kind", "path", "eval_path"});
    task.path = get_string(j, "path", path, "");
    task.eval_path = get_string(j, "eval_path", path, "");
    if (task.path.empty()) bad(join(path, "path"), "required for cifar10 tasks");
  } else if (kind.empty()) {
    bad(join(path, "kind"), "required (\"synthetic\" or \"cifar10\")");
  } else {
    bad(join(path, "kind"), "unknown task kind \"" + kind + "\"");
  }
  return task;
}

void parse_groups(const ordered_json& j, RunConfig* cfg) {
  const std::string path = "groups";
  if (!j.is_object()) bad(path, "expected an object");
  check_keys(j, path, {"preset", "explicit"});
  const bool has_preset = j.contains("preset");
  const bool has_explicit = j.contains("explicit");
  if (has_preset && has_explicit) bad(path, "give a preset or an explicit list, not both");
  if (has_preset) {
    cfg->group_preset_name = get_string(j, "preset", path, "");
    if (!is_group_preset(cfg->group_preset_name))
      bad(join(path, "preset"), "unknown preset \"" + cfg->group_preset_name + "\"");
    cfg->explicit_groups.clear();
    return;
  }
  if (!has_explicit) return;  // empty object keeps the default preset
  const ordered_json& list = j.at("explicit");
  if (!list.is_array() || list.empty()) bad(join(path, "explicit"), "expected a non-empty array");
  cfg->group_preset_name.clear();
  cfg->explicit_groups.clear();
  for (std::size_t gi = 0; gi < list.size(); ++gi) {
    const std::string gpath = path + ".explicit[" + std::to_string(gi) + "]";
    const ordered_json& gj = list[gi];
    if (!gj.is_object()) bad(gpath, "expected an object");
    check_keys(gj, gpath, {"edges", "k"});
    EdgeGroup group;
    const ordered_json* edges = maybe(gj, "edges");
    if (!edges || !edges->is_array() || edges->empty()) bad(join(gpath, "edges"), "expected a non-empty array");
    for (const auto& e : *edges) {
      if (!e.is_number_integer()) bad(join(gpath, "edges"), "expected integer edge indices");
      group.edges.push_back(e.get<int>());
    }
    group.k = get_int(gj, "k", gpath, 1);
    if (group.k < 1) bad(join(gpath, "k"), "must be >= 1");
    cfg->explicit_groups.push_back(std::move(group));
  }
}

ordered_json schedule_json(const WeightSchedule& s) {
  ordered_json j;
  j["control"] = schedule_kind_name(s.control.kind);
  j["scale"] = s.scale;
  j["activation_epoch"] = s.control.activation_epoch;
  j["k"] = s.control.k;
  j["t0"] = s.control.t0;
  return j;
}

}  // namespace

int RunConfig::task_classes() const {
  return task.kind == TaskConfig::Kind::Synthetic ? task.classes : 10;
}

int RunConfig::task_image_hw() const {
  return task.kind == TaskConfig::Kind::Synthetic ? task.image_hw : 32;
}

RunConfig parse_run_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorKind::Config, std::string("config: unparseable JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::Config, "config: top level must be an object");
  check_keys(j, "",
             {"schema_version", "task", "network", "search", "regularizers", "groups", "retrain", "seed", "out_dir"});
  const ordered_json* ver = maybe(j, "schema_version");
  if (!ver) bad("schema_version", "required");
  if (!ver->is_number_integer() || ver->get<int>() != 1) bad("schema_version", "expected 1");

  RunConfig cfg;
  const ordered_json* task = maybe(j, "task");
  if (!task) bad("task", "required");
  cfg.task = parse_task(*task);

  if (const ordered_json* net = maybe(j, "network")) {
    const std::string path = "network";
    if (!net->is_object()) bad(path, "expected an object");
    check_keys(*net, path, {"cells", "channels", "nodes"});
    cfg.cells = get_int(*net, "cells", path, cfg.cells);
    cfg.channels = get_int(*net, "channels", path, cfg.channels);
    cfg.num_nodes = get_int(*net, "nodes", path, cfg.num_nodes);
    if (cfg.cells < 1) bad(join(path, "cells"), "must be >= 1");
    if (cfg.channels < 1) bad(join(path, "channels"), "must be >= 1");
    if (cfg.num_nodes < 3) bad(join(path, "nodes"), "must be >= 3");
  }

  if (const ordered_json* search = maybe(j, "search")) {
    const std::string path = "search";
    if (!search->is_object()) bad(path, "expected an object");
    check_keys(*search, path,
               {"epochs", "batch", "split_fraction", "theta_lr0", "theta_momentum", "theta_weight_decay", "arch_lr",
                "arch_beta1", "arch_beta2", "arch_weight_decay", "adam_eps"});
    cfg.epochs = get_int(*search, "epochs", path, cfg.epochs);
    cfg.batch = get_int(*search, "batch", path, cfg.batch);
    cfg.split_fraction = get_real(*search, "split_fraction", path, cfg.split_fraction);
    cfg.optim.theta_lr0 = get_real(*search, "theta_lr0", path, cfg.optim.theta_lr0);
    cfg.optim.theta_momentum = get_real(*search, "theta_momentum", path, cfg.optim.theta_momentum);
    cfg.optim.theta_weight_decay = get_real(*search, "theta_weight_decay", path, cfg.optim.theta_weight_decay);
    cfg.optim.arch_lr = get_real(*search, "arch_lr", path, cfg.optim.arch_lr);
    cfg.optim.arch_beta1 = get_real(*search, "arch_beta1", path, cfg.optim.arch_beta1);
    cfg.optim.arch_beta2 = get_real(*search, "arch_beta2", path, cfg.optim.arch_beta2);
    cfg.optim.arch_weight_decay = get_real(*search, "arch_weight_decay", path, cfg.optim.arch_weight_decay);
    cfg.optim.adam_eps = get_real(*search, "adam_eps", path, cfg.optim.adam_eps);
    if (cfg.epochs < 1) bad(join(path, "epochs"), "must be >= 1");
    if (cfg.batch < 1) bad(join(path, "batch"), "must be >= 1");
    if (!(cfg.split_fraction > 0 && cfg.split_fraction < 1))
      bad(join(path, "split_fraction"), "must be strictly between 0 and 1");
  }

  if (const ordered_json* reg = maybe(j, "regularizers")) {
    const std::string path = "regularizers";
    if (!reg->is_object()) bad(path, "expected an object");
    check_keys(*reg, path, {"lambda_c", "lambda_alpha", "lambda_beta", "beta_multiplier"});
    if (const ordered_json* s = maybe(*reg, "lambda_c")) cfg.lambda_c = parse_schedule(*s, join(path, "lambda_c"), cfg.lambda_c);
    if (const ordered_json* s = maybe(*reg, "lambda_alpha"))
      cfg.lambda_alpha = parse_schedule(*s, join(path, "lambda_alpha"), cfg.lambda_alpha);
    if (const ordered_json* s = maybe(*reg, "lambda_beta"))
      cfg.lambda_beta = parse_schedule(*s, join(path, "lambda_beta"), cfg.lambda_beta);
    cfg.beta_multiplier = get_real(*reg, "beta_multiplier", path, cfg.beta_multiplier);
    if (cfg.beta_multiplier < 0) bad(join(path, "beta_multiplier"), "must be >= 0");
  }

  if (const ordered_json* groups = maybe(j, "groups")) parse_groups(*groups, &cfg);

  if (const ordered_json* retrain = maybe(j, "retrain")) {
    const std::string path = "retrain";
    if (!retrain->is_object()) bad(path, "expected an object");
    check_keys(*retrain, path, {"epochs"});
    cfg.retrain_epochs = get_int(*retrain, "epochs", path, cfg.retrain_epochs);
    if (cfg.retrain_epochs < 0) bad(join(path, "epochs"), "must be >= 0");
  }

  cfg.seed = get_u64(j, "seed", "", cfg.seed);
  cfg.out_dir = get_string(j, "out_dir", "", cfg.out_dir);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_run_config(text.str());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) fail(ErrorKind::Config, path + ": " + e.what());
    throw;
  }
}

std::string run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["schema_version"] = 1;
  ordered_json task;
  if (cfg.task.kind == TaskConfig::Kind::Synthetic) {
    task["kind"] = "synthetic";
    task["classes"] = cfg.task.classes;
    task["count"] = cfg.task.count;
    task["eval_count"] = cfg.task.eval_count;
    task["image_hw"] = cfg.task.image_hw;
  } else {
    task["kind"] = "cifar10";
    task["path"] = cfg.task.path;
    if (!cfg.task.eval_path.empty()) task["eval_path"] = cfg.task.eval_path;
  }
  j["task"] = task;
  ordered_json net;
  net["cells"] = cfg.cells;
  net["channels"] = cfg.channels;
  net["nodes"] = cfg.num_nodes;
  j["network"] = net;
  ordered_json search;
  search["epochs"] = cfg.epochs;
  search["batch"] = cfg.batch;
  search["split_fraction"] = cfg.split_fraction;
  search["theta_lr0"] = cfg.optim.theta_lr0;
  search["theta_momentum"] = cfg.optim.theta_momentum;
  search["theta_weight_decay"] = cfg.optim.theta_weight_decay;
  search["arch_lr"] = cfg.optim.arch_lr;
  search["arch_beta1"] = cfg.optim.arch_beta1;
  search["arch_beta2"] = cfg.optim.arch_beta2;
  search["arch_weight_decay"] = cfg.optim.arch_weight_decay;
  search["adam_eps"] = cfg.optim.adam_eps;
  j["search"] = search;
  ordered_json reg;
  reg["lambda_c"] = schedule_json(cfg.lambda_c);
  reg["lambda_alpha"] = schedule_json(cfg.lambda_alpha);
  reg["lambda_beta"] = schedule_json(cfg.lambda_beta);
  reg["beta_multiplier"] = cfg.beta_multiplier;
  j["regularizers"] = reg;
  ordered_json groups;
  if (!cfg.group_preset_name.empty()) {
    groups["preset"] = cfg.group_preset_name;
  } else {
    ordered_json list = ordered_json::array();
    for (const EdgeGroup& g : cfg.explicit_groups) {
      ordered_json gj;
      gj["edges"] = g.edges;
      gj["k"] = g.k;
      list.push_back(gj);
    }
    groups["explicit"] = list;
  }
  j["groups"] = groups;
  ordered_json retrain;
  retrain["epochs"] = cfg.retrain_epochs;
  j["retrain"] = retrain;
  j["seed"] = cfg.seed;
  if (!cfg.out_dir.empty()) j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

NetworkSpec network_spec(const RunConfig& cfg) {
  NetworkSpec spec;
  spec.cells = cfg.cells;
  spec.channels = cfg.channels;
  spec.num_nodes = cfg.num_nodes;
  spec.classes = cfg.task_classes();
  spec.image_hw = cfg.task_image_hw();
  spec.batch = cfg.batch;
  return spec;
}

std::vector<EdgeGroup> resolve_groups(const RunConfig& cfg) {
  const CellTopology topo = CellTopology::make(cfg.num_nodes);
  if (!cfg.group_preset_name.empty()) return group_preset(cfg.group_preset_name, topo);
  validate_groups(cfg.explicit_groups, topo);
  return cfg.explicit_groups;
}

SearchSettings search_settings(const RunConfig& cfg) {
  SearchSettings s;
  s.net = network_spec(cfg);
  s.groups = resolve_groups(cfg);
  s.epochs = cfg.epochs;
  s.split_fraction = cfg.split_fraction;
  s.lambda_c = cfg.lambda_c;
  s.lambda_alpha = cfg.lambda_alpha;
  s.lambda_beta = cfg.lambda_beta;
  s.beta_multiplier = cfg.beta_multiplier;
  s.optim = cfg.optim;
  s.seed = cfg.seed;
  return s;
}

RetrainSettings retrain_settings(const RunConfig& cfg) {
  RetrainSettings s;
  s.net = network_spec(cfg);
  s.epochs = cfg.retrain_epochs;
  s.optim = cfg.optim;
  s.seed = cfg.seed;
  return s;
}

Dataset load_train_dataset(const RunConfig& cfg) {
  if (cfg.task.kind == TaskConfig::Kind::Synthetic)
    return synth_generate(cfg.task.classes, cfg.task.count, cfg.task.image_hw, cfg.task.image_hw, cfg.seed);
  return load_cifar10_binary(cfg.task.path);
}

Dataset load_eval_dataset(const RunConfig& cfg) {
  if (cfg.task.kind == TaskConfig::Kind::Synthetic)
    return synth_generate(cfg.task.classes, cfg.task.eval_count, cfg.task.image_hw, cfg.task.image_hw,
                          mix_seed(cfg.seed, kEvalSeedStream));
  if (cfg.task.eval_path.empty())
    fail(ErrorKind::Config, "config: task.eval_path: required to evaluate on cifar10");
  return load_cifar10_binary(cfg.task.eval_path);
}

}  // namespace entnas
