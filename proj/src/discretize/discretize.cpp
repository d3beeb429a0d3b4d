#include "discretize/discretize.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "common.hpp"

namespace entnas {

namespace {

using ordered_json = nlohmann::ordered_json;

const char* kTypeNames[kNumCellTypes] = {"normal", "reduce"};

// Shared selection core: rank edges inside each group by `edge_scores`, keep
// the top k, then pick the best-scoring op on every kept edge. Exact score
// ties resolve to the smallest (i, j) pair / op index and are reported.
std::vector<GenotypeEdge> select_edges(const std::vector<real>& edge_scores, const std::vector<real>& op_scores,
                                       const CellTopology& topo, const std::vector<EdgeGroup>& groups,
                                       const char* type_name, std::vector<std::string>* warnings) {
  const int num_edges = topo.edge_count();
  std::vector<char> keep(static_cast<std::size_t>(num_edges), 0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<int> order = groups[gi].edges;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (edge_scores[static_cast<std::size_t>(a)] != edge_scores[static_cast<std::size_t>(b)])
        return edge_scores[static_cast<std::size_t>(a)] > edge_scores[static_cast<std::size_t>(b)];
      return topo.edges[static_cast<std::size_t>(a)] < topo.edges[static_cast<std::size_t>(b)];
    });
    const int k = groups[gi].k;
    if (warnings && k < static_cast<int>(order.size()) &&
        edge_scores[static_cast<std::size_t>(order[static_cast<std::size_t>(k) - 1])] ==
            edge_scores[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]) {
      const auto [i, j] = topo.edges[static_cast<std::size_t>(order[static_cast<std::size_t>(k) - 1])];
      warnings->push_back(std::string(type_name) + " group " + std::to_string(gi) +
                          ": tie at the selection boundary, keeping edge (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
    }
    for (int r = 0; r < k; ++r) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = 1;
  }

  std::vector<GenotypeEdge> kept;
  for (int e = 0; e < num_edges; ++e) {
    if (!keep[static_cast<std::size_t>(e)]) continue;
    const real* row = op_scores.data() + static_cast<std::size_t>(e) * kNumOps;
    int best = 0;
    int at_max = 1;
    for (int o = 1; o < kNumOps; ++o) {
      if (row[o] > row[best]) {
        best = o;
        at_max = 1;
      } else if (row[o] == row[best]) {
        ++at_max;
      }
    }
    const auto [i, j] = topo.edges[static_cast<std::size_t>(e)];
    if (warnings && at_max > 1)
      warnings->push_back(std::string(type_name) + " edge (" + std::to_string(i) + "," + std::to_string(j) +
                          "): op-score tie, keeping " + op_name(static_cast<OpKind>(best)));
    kept.push_back({i, j, static_cast<OpKind>(best)});
  }
  return kept;  // edge-index order, i.e. sorted by (j, i)
}

// Group-wise softmax of beta scattered back onto the edge axis.
std::vector<real> group_softmax_masses(const Tensor& beta, const std::vector<EdgeGroup>& groups, int num_edges) {
  std::vector<real> mass(static_cast<std::size_t>(num_edges), 0);
  std::vector<real> logits;
  for (const auto& grp : groups) {
    logits.clear();
    for (int e : grp.edges) logits.push_back(beta[static_cast<std::size_t>(e)]);
    const std::vector<real> sm = softmax_values(logits.data(), static_cast<int>(logits.size()));
    for (std::size_t r = 0; r < grp.edges.size(); ++r) mass[static_cast<std::size_t>(grp.edges[r])] = sm[r];
  }
  return mass;
}

[[noreturn]] void bad_field(const std::string& path, const std::string& what) {
  fail(ErrorKind::Format, "genotype: " + path + ": " + what);
}

void require_keys(const ordered_json& obj, const std::string& path, const std::vector<std::string>& required) {
  for (const auto& [key, unused] : obj.items())
    if (std::find(required.begin(), required.end(), key) == required.end())
      bad_field(path, "unknown key '" + key + "'");
  for (const auto& key : required)
    if (!obj.contains(key)) bad_field(path, "missing key '" + key + "'");
}

int get_int(const ordered_json& j, const std::string& path) {
  if (!j.is_number_integer()) bad_field(path, "expected an integer");
  return j.get<int>();
}

}  // namespace

Genotype derive_genotype(const ArchParams& arch, const CellTopology& topo, const std::vector<EdgeGroup>& groups,
                         std::vector<std::string>* warnings) {
  validate_groups(groups, topo);
  Genotype geno;
  geno.num_nodes = topo.num_nodes;
  geno.groups = groups;
  const int num_edges = topo.edge_count();
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (!arch.has(type)) continue;
    std::vector<real> op_scores(static_cast<std::size_t>(num_edges) * kNumOps);
    for (int e = 0; e < num_edges; ++e) {
      const std::vector<real> sm = softmax_values(arch.alpha[type].data() + static_cast<std::size_t>(e) * kNumOps,
                                                  kNumOps);
      std::copy(sm.begin(), sm.end(), op_scores.begin() + static_cast<std::size_t>(e) * kNumOps);
    }
    const std::vector<real> edge_scores = group_softmax_masses(arch.beta[type], groups, num_edges);
    geno.kept[type] = select_edges(edge_scores, op_scores, topo, groups, kTypeNames[type], warnings);
  }
  return geno;
}

Genotype derive_from_weights(const MixWeights& mix, const CellTopology& topo, const std::vector<EdgeGroup>& groups,
                             std::vector<std::string>* warnings) {
  validate_groups(groups, topo);
  Genotype geno;
  geno.num_nodes = topo.num_nodes;
  geno.groups = groups;
  const int num_edges = topo.edge_count();
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (!mix.has(type)) continue;
    std::vector<real> op_scores(mix.op[type].data(), mix.op[type].data() + mix.op[type].size());
    std::vector<real> edge_scores(mix.edge[type].data(), mix.edge[type].data() + mix.edge[type].size());
    geno.kept[type] = select_edges(edge_scores, op_scores, topo, groups, kTypeNames[type], warnings);
  }
  return geno;
}

MixWeights one_hot_weights(const Genotype& geno, const CellTopology& topo) {
  MixWeights mix;
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (!geno.has(type)) continue;
    mix.op[type] = Tensor::zeros({topo.edge_count(), kNumOps});
    mix.edge[type] = Tensor::zeros({topo.edge_count()});
    for (const GenotypeEdge& e : geno.kept[type]) {
      const int idx = topo.edge_index(e.i, e.j);
      mix.op[type][static_cast<std::size_t>(idx) * kNumOps + static_cast<std::size_t>(e.op)] = 1;
      mix.edge[type][static_cast<std::size_t>(idx)] = 1;
    }
  }
  return mix;
}

std::vector<real> edge_max_op_mass(const ArchParams& arch, int type) {
  if (!arch.has(type)) return {};
  const int num_edges = arch.alpha[type].extent(0);
  std::vector<real> out(static_cast<std::size_t>(num_edges));
  for (int e = 0; e < num_edges; ++e) {
    const std::vector<real> sm = softmax_values(arch.alpha[type].data() + static_cast<std::size_t>(e) * kNumOps,
                                                kNumOps);
    out[static_cast<std::size_t>(e)] = *std::max_element(sm.begin(), sm.end());
  }
  return out;
}

std::vector<real> group_topk_mass(const ArchParams& arch, const CellTopology& topo,
                                  const std::vector<EdgeGroup>& groups, int type) {
  if (!arch.has(type)) return {};
  const std::vector<real> mass = group_softmax_masses(arch.beta[type], groups, topo.edge_count());
  std::vector<real> out;
  std::vector<real> local;
  for (const auto& grp : groups) {
    local.clear();
    for (int e : grp.edges) local.push_back(mass[static_cast<std::size_t>(e)]);
    std::sort(local.begin(), local.end(), std::greater<real>());
    real acc = 0;
    for (int r = 0; r < grp.k; ++r) acc += local[static_cast<std::size_t>(r)];
    out.push_back(acc);
  }
  return out;
}

std::string genotype_to_json(const Genotype& geno) {
  ordered_json j;
  j["schema_version"] = 1;
  j["num_nodes"] = geno.num_nodes;
  ordered_json groups = ordered_json::array();
  for (const auto& grp : geno.groups) groups.push_back({{"edges", grp.edges}, {"k", grp.k}});
  j["groups"] = std::move(groups);
  ordered_json cells = ordered_json::object();
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (!geno.has(type)) continue;
    ordered_json list = ordered_json::array();
    for (const GenotypeEdge& e : geno.kept[type])
      list.push_back({{"edge", {e.i, e.j}}, {"op", op_name(e.op)}});
    cells[kTypeNames[type]] = std::move(list);
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

Genotype genotype_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::Format, std::string("genotype: not parseable: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::Format, "genotype: top level must be an object");
  require_keys(j, "$", {"schema_version", "num_nodes", "groups", "cells"});
  const int version = get_int(j["schema_version"], "schema_version");
  if (version != 1) bad_field("schema_version", "unsupported value " + std::to_string(version));
  const int num_nodes = get_int(j["num_nodes"], "num_nodes");
  if (num_nodes < 3) bad_field("num_nodes", "must be at least 3");
  const CellTopology topo = CellTopology::make(num_nodes);

  if (!j["groups"].is_array()) bad_field("groups", "expected an array");
  Genotype geno;
  geno.num_nodes = num_nodes;
  for (std::size_t gi = 0; gi < j["groups"].size(); ++gi) {
    const std::string path = "groups[" + std::to_string(gi) + "]";
    const ordered_json& gj = j["groups"][gi];
    if (!gj.is_object()) bad_field(path, "expected an object");
    require_keys(gj, path, {"edges", "k"});
    EdgeGroup grp;
    grp.k = get_int(gj["k"], path + ".k");
    if (!gj["edges"].is_array()) bad_field(path + ".edges", "expected an array");
    for (std::size_t r = 0; r < gj["edges"].size(); ++r) {
      const int e = get_int(gj["edges"][r], path + ".edges[" + std::to_string(r) + "]");
      if (e < 0 || e >= topo.edge_count())
        bad_field(path + ".edges[" + std::to_string(r) + "]",
                  "edge index " + std::to_string(e) + " outside [0," + std::to_string(topo.edge_count()) + ")");
      grp.edges.push_back(e);
    }
    geno.groups.push_back(std::move(grp));
  }
  validate_groups(geno.groups, topo);

  if (!j["cells"].is_object()) bad_field("cells", "expected an object");
  if (j["cells"].empty()) bad_field("cells", "at least one cell type required");
  for (const auto& [key, list] : j["cells"].items()) {
    int type = -1;
    for (int t = 0; t < kNumCellTypes; ++t)
      if (key == kTypeNames[t]) type = t;
    if (type < 0) bad_field("cells", "unknown key '" + key + "'");
    const std::string path = "cells." + key;
    if (!list.is_array()) bad_field(path, "expected an array");
    std::vector<char> seen(static_cast<std::size_t>(topo.edge_count()), 0);
    std::vector<std::pair<int, GenotypeEdge>> entries;
    for (std::size_t r = 0; r < list.size(); ++r) {
      const std::string epath = path + "[" + std::to_string(r) + "]";
      const ordered_json& ej = list[r];
      if (!ej.is_object()) bad_field(epath, "expected an object");
      require_keys(ej, epath, {"edge", "op"});
      if (!ej["edge"].is_array() || ej["edge"].size() != 2) bad_field(epath + ".edge", "expected [i, j]");
      GenotypeEdge edge;
      edge.i = get_int(ej["edge"][0], epath + ".edge[0]");
      edge.j = get_int(ej["edge"][1], epath + ".edge[1]");
      const auto it = std::find(topo.edges.begin(), topo.edges.end(), std::make_pair(edge.i, edge.j));
      if (it == topo.edges.end())
        bad_field(epath + ".edge", "no edge (" + std::to_string(edge.i) + "," + std::to_string(edge.j) + ") in a " +
                                       std::to_string(num_nodes) + "-node cell");
      const int idx = static_cast<int>(it - topo.edges.begin());
      if (seen[static_cast<std::size_t>(idx)]) bad_field(epath + ".edge", "edge listed twice");
      seen[static_cast<std::size_t>(idx)] = 1;
      if (!ej["op"].is_string()) bad_field(epath + ".op", "expected a string");
      edge.op = op_from_name(ej["op"].get<std::string>());
      entries.emplace_back(idx, edge);
    }
    for (std::size_t gi = 0; gi < geno.groups.size(); ++gi) {
      int in_group = 0;
      for (const auto& [idx, unused] : entries)
        if (std::find(geno.groups[gi].edges.begin(), geno.groups[gi].edges.end(), idx) != geno.groups[gi].edges.end())
          ++in_group;
      if (in_group != geno.groups[gi].k)
        bad_field(path, "group " + std::to_string(gi) + " keeps " + std::to_string(in_group) + " edges, expected " +
                            std::to_string(geno.groups[gi].k));
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [unused, edge] : entries) geno.kept[type].push_back(edge);
  }
  return geno;
}

std::string gap_report_to_json(const GapReport& report) {
  ordered_json j;
  j["continuous_acc"] = report.continuous_acc;
  j["onehot_acc"] = report.onehot_acc;
  j["drop"] = report.drop;
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (report.kept_op_mass[type].empty()) continue;
    j["kept_op_mass"][kTypeNames[type]] = report.kept_op_mass[type];
    j["kept_edge_mass"][kTypeNames[type]] = report.kept_edge_mass[type];
  }
  return j.dump() + "\n";
}

real accuracy_on(SuperNetwork& net, const Dataset& ds, const Normalizer& norm) {
  if (ds.count() == 0) fail(ErrorKind::Config, "accuracy: empty evaluation set");
  if (ds.classes != net.spec.classes)
    fail(ErrorKind::Config, "accuracy: dataset has " + std::to_string(ds.classes) + " classes, network expects " +
                                std::to_string(net.spec.classes));
  const bool was_train = net.graph.train_mode();
  net.graph.set_train(false);
  std::vector<int> order(static_cast<std::size_t>(ds.count()));
  std::iota(order.begin(), order.end(), 0);
  const int chunk = net.spec.batch;
  int hits = 0;
  for (int start = 0; start < ds.count(); start += chunk) {
    const int end = std::min(ds.count(), start + chunk);
    const Batch batch = gather_batch(ds, order, static_cast<std::size_t>(start), static_cast<std::size_t>(end),
                                     chunk, norm);
    net.graph.bind("x", batch.x);
    net.graph.bind("y", batch.y);
    net.graph.evaluate();
    const Tensor& logits = net.graph.value(net.logits);
    for (int r = 0; r < batch.real_count; ++r) {
      const real* row = logits.data() + static_cast<std::size_t>(r) * ds.classes;
      int best = 0;
      for (int c = 1; c < ds.classes; ++c)
        if (row[c] > row[best]) best = c;
      hits += (best == batch.labels[static_cast<std::size_t>(r)]);
    }
  }
  net.graph.set_train(was_train);
  return real(hits) / ds.count();
}

GapReport gap_probe(const NetworkSpec& spec, const ArchParams& arch, const Genotype& geno,
                    const std::map<std::string, Tensor>& theta, const std::map<std::string, Tensor>& buffers,
                    const Dataset& eval_set, const Normalizer& norm) {
  if (eval_set.count() == 0) fail(ErrorKind::Config, "gap probe: empty evaluation set");
  const CellTopology topo = CellTopology::make(spec.num_nodes);

  SuperNetwork continuous = build_fixed_network(spec, continuous_mix(arch, topo), 0);
  continuous.graph.import_params(theta);
  continuous.graph.import_buffers(buffers);

  SuperNetwork onehot = build_fixed_network(spec, one_hot_weights(geno, topo), 0);
  onehot.graph.import_params(theta);
  onehot.graph.import_buffers(buffers);

  GapReport report;
  report.continuous_acc = 100 * accuracy_on(continuous, eval_set, norm);
  report.onehot_acc = 100 * accuracy_on(onehot, eval_set, norm);
  report.drop = report.continuous_acc - report.onehot_acc;
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (!geno.has(type) || !arch.has(type)) continue;
    for (const GenotypeEdge& e : geno.kept[type]) {
      const int idx = topo.edge_index(e.i, e.j);
      const std::vector<real> sm = softmax_values(arch.alpha[type].data() + static_cast<std::size_t>(idx) * kNumOps,
                                                  kNumOps);
      report.kept_op_mass[type].push_back(sm[static_cast<std::size_t>(e.op)]);
    }
    report.kept_edge_mass[type] = group_topk_mass(arch, topo, geno.groups, type);
  }
  return report;
}

SuperNetwork instantiate_subnetwork(const Genotype& geno, const NetworkSpec& spec, std::uint64_t theta_seed) {
  if (geno.num_nodes != spec.num_nodes)
    fail(ErrorKind::Contract, "subnetwork: genotype has " + std::to_string(geno.num_nodes) + " nodes, network spec " +
                                  std::to_string(spec.num_nodes));
  if (!geno.has(kNormal)) fail(ErrorKind::Contract, "subnetwork: genotype lacks normal-cell edges");
  if (!reduction_cells(spec.cells).empty() && !geno.has(kReduce))
    fail(ErrorKind::Contract, "subnetwork: network has reduction cells but the genotype lacks reduce edges");
  const CellTopology topo = CellTopology::make(spec.num_nodes);
  return build_fixed_network(spec, one_hot_weights(geno, topo), theta_seed);
}

}  // namespace entnas
