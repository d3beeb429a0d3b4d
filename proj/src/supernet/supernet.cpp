#include "supernet/supernet.hpp"

#include <algorithm>
#include <cmath>

namespace entnas {

namespace {

constexpr std::uint64_t kArchStream = 0x41;

std::string cell_prefix(int idx) { return "c" + std::to_string(idx); }

std::string edge_prefix(const std::string& cell, int i, int j) {
  return cell + ".e" + std::to_string(i) + "_" + std::to_string(j);
}

}  // namespace

CellTopology CellTopology::make(int num_nodes) {
  if (num_nodes < 3) fail(ErrorKind::Contract, "cell needs at least 3 nodes (2 inputs + 1 intermediate)");
  CellTopology t;
  t.num_nodes = num_nodes;
  for (int j = 2; j < num_nodes; ++j)
    for (int i = 0; i < j; ++i) t.edges.emplace_back(i, j);
  return t;
}

int CellTopology::edge_index(int i, int j) const {
  for (int e = 0; e < edge_count(); ++e)
    if (edges[static_cast<size_t>(e)] == std::make_pair(i, j)) return e;
  fail(ErrorKind::Contract,
       "no edge (" + std::to_string(i) + "," + std::to_string(j) + ") in a " + std::to_string(num_nodes) +
           "-node cell");
}

std::vector<int> CellTopology::node_edges(int j) const {
  std::vector<int> out;
  for (int e = 0; e < edge_count(); ++e)
    if (edges[static_cast<size_t>(e)].second == j) out.push_back(e);
  if (out.empty()) fail(ErrorKind::Contract, "node " + std::to_string(j) + " has no incoming edges");
  return out;
}

std::vector<int> reduction_cells(int cells) {
  if (cells <= 1) return {};
  if (cells == 2) return {1};
  return {cells / 3, 2 * cells / 3};
}

ArchParams init_arch_params(const CellTopology& topo, bool with_reduce, std::uint64_t seed) {
  Rng rng(mix_seed(seed, kArchStream));
  ArchParams arch;
  const int types = with_reduce ? 2 : 1;
  for (int t = 0; t < types; ++t) {
    arch.alpha[t] = Tensor({topo.edge_count(), kNumOps});
    arch.beta[t] = Tensor({topo.edge_count()});
    for (std::size_t i = 0; i < arch.alpha[t].size(); ++i) arch.alpha[t][i] = real(1e-3) * normal_real(rng);
    // beta starts at small positive values: the cardinality penalty only has
    // gradient support on {beta > 0}, so a symmetric init would leave about
    // half the edges invisible to it from the first step
    for (std::size_t i = 0; i < arch.beta[t].size(); ++i) arch.beta[t][i] = real(1e-3) * std::abs(normal_real(rng));
  }
  return arch;
}

std::vector<real> softmax_values(const real* logits, int count) {
  std::vector<real> out(static_cast<size_t>(count));
  real mx = logits[0];
  for (int i = 1; i < count; ++i) mx = std::max(mx, logits[i]);
  real denom = 0;
  for (int i = 0; i < count; ++i) {
    out[static_cast<size_t>(i)] = std::exp(logits[i] - mx);
    denom += out[static_cast<size_t>(i)];
  }
  for (int i = 0; i < count; ++i) out[static_cast<size_t>(i)] /= denom;
  return out;
}

MixWeights continuous_mix(const ArchParams& arch, const CellTopology& topo) {
  MixWeights mix;
  for (int t = 0; t < kNumCellTypes; ++t) {
    if (!arch.has(t)) continue;
    if (arch.alpha[t].extent(0) != topo.edge_count() || arch.alpha[t].extent(1) != kNumOps)
      fail(ErrorKind::Contract, "alpha shape " + arch.alpha[t].shape_str() + " does not fit the topology");
    mix.op[t] = Tensor({topo.edge_count(), kNumOps});
    mix.edge[t] = Tensor({topo.edge_count()});
    for (int e = 0; e < topo.edge_count(); ++e) {
      auto p = softmax_values(arch.alpha[t].data() + static_cast<std::size_t>(e) * kNumOps, kNumOps);
      for (int o = 0; o < kNumOps; ++o) mix.op[t][static_cast<size_t>(e * kNumOps + o)] = p[static_cast<size_t>(o)];
    }
    for (int j = 2; j < topo.num_nodes; ++j) {
      const std::vector<int> members = topo.node_edges(j);
      std::vector<real> logits;
      for (int e : members) logits.push_back(arch.beta[t][static_cast<size_t>(e)]);
      auto b = softmax_values(logits.data(), static_cast<int>(logits.size()));
      for (std::size_t k = 0; k < members.size(); ++k) mix.edge[t][static_cast<size_t>(members[k])] = b[k];
    }
  }
  return mix;
}

ArchParams SuperNetwork::arch_snapshot() const {
  ArchParams arch;
  for (int t = 0; t < kNumCellTypes; ++t) {
    if (!has_type[t]) continue;
    arch.alpha[t] = graph.value(alpha_leaf[t]);
    arch.beta[t] = graph.value(beta_leaf[t]);
  }
  return arch;
}

namespace {

struct StageIO {
  NodeId node;
  int hw;
};

// Builds one cell. In search mode alpha_sm/beta_sm are live softmax nodes; in
// fixed mode `mix` supplies literal weights and zero-weight branches are
// never instantiated.
NodeId build_cell(Graph& g, const CellTopology& topo, NodeId s0, NodeId s1, bool reduction, int width, int batch,
                  int out_hw, NodeId alpha_sm, const std::vector<NodeId>& beta_sm, const MixWeights* mix,
                  int cell_type, const std::string& cprefix, Rng& rng) {
  std::vector<NodeId> states = {s0, s1};
  for (int j = 2; j < topo.num_nodes; ++j) {
    std::vector<NodeId> contributions;
    for (int i = 0; i < j; ++i) {
      const int e = topo.edge_index(i, j);
      const int stride = (reduction && i < 2) ? 2 : 1;
      const std::string eprefix = edge_prefix(cprefix, i, j);
      std::vector<NodeId> terms;
      if (mix == nullptr) {
        for (int o = 0; o < kNumOps; ++o) {
          NodeId y = apply_op(g, static_cast<OpKind>(o), states[static_cast<size_t>(i)], stride,
                              eprefix + "." + op_name(static_cast<OpKind>(o)), rng);
          terms.push_back(g.scale_by(y, alpha_sm, e * kNumOps + o));
        }
        contributions.push_back(g.scale_by(g.add(terms), beta_sm[static_cast<size_t>(j - 2)], i));
      } else {
        const real ew = mix->edge[cell_type][static_cast<size_t>(e)];
        if (ew == 0) continue;
        for (int o = 0; o < kNumOps; ++o) {
          const real w = mix->op[cell_type][static_cast<size_t>(e * kNumOps + o)];
          if (w == 0) continue;
          NodeId y = apply_op(g, static_cast<OpKind>(o), states[static_cast<size_t>(i)], stride,
                              eprefix + "." + op_name(static_cast<OpKind>(o)), rng);
          terms.push_back(w == 1 ? y : g.scalar_scale(y, w));
        }
        if (terms.empty()) continue;
        NodeId f = terms.size() == 1 ? terms[0] : g.add(terms);
        contributions.push_back(ew == 1 ? f : g.scalar_scale(f, ew));
      }
    }
    NodeId zj;
    if (contributions.empty())
      zj = g.constant(Tensor::zeros({batch, width, out_hw, out_hw}));
    else
      zj = contributions.size() == 1 ? contributions[0] : g.add(contributions);
    states.push_back(zj);
  }
  return g.concat_channels(std::vector<NodeId>(states.begin() + 2, states.end()));
}

SuperNetwork build_network(const NetworkSpec& spec, const ArchParams* arch_init, const MixWeights* mix,
                           std::uint64_t theta_seed) {
  if (spec.cells < 1) fail(ErrorKind::Config, "network.cells must be >= 1");
  if (spec.channels < 1) fail(ErrorKind::Config, "network.channels must be >= 1");
  if (spec.classes < 2) fail(ErrorKind::Config, "task needs at least 2 classes");
  if (spec.batch < 1) fail(ErrorKind::Config, "search.batch_size must be >= 1");

  SuperNetwork net;
  net.spec = spec;
  net.topo = CellTopology::make(spec.num_nodes);

  const std::vector<int> reduce_at = reduction_cells(spec.cells);
  const int reductions = static_cast<int>(reduce_at.size());
  const int min_div = 1 << reductions;
  if (spec.image_hw < min_div || spec.image_hw % min_div)
    fail(ErrorKind::Config, "image extent " + std::to_string(spec.image_hw) + " must be divisible by " +
                                std::to_string(min_div) + " (one halving per reduction cell)");
  net.has_type[kNormal] = spec.cells > reductions;
  net.has_type[kReduce] = reductions > 0;

  Graph& g = net.graph;
  net.images = g.input("x", {spec.batch, 3, spec.image_hw, spec.image_hw});
  net.labels = g.input("y", {spec.batch, spec.classes});

  if (arch_init != nullptr) {
    static const char* type_tag[] = {"normal", "reduce"};
    for (int t = 0; t < kNumCellTypes; ++t) {
      if (!net.has_type[t]) continue;
      if (!arch_init->has(t)) fail(ErrorKind::Contract, "missing architecture parameters for cell type");
      const std::string base = std::string("arch.") + type_tag[t];
      net.alpha_leaf[t] = g.param(LeafRole::Alpha, base + ".alpha", arch_init->alpha[t]);
      net.beta_leaf[t] = g.param(LeafRole::Beta, base + ".beta", arch_init->beta[t]);
      net.alpha_sm[t] = g.softmax(net.alpha_leaf[t], 1);
      for (int j = 2; j < spec.num_nodes; ++j)
        net.beta_sm[t].push_back(g.softmax(g.gather(net.beta_leaf[t], net.topo.node_edges(j)), 0));
    }
  } else {
    for (int t = 0; t < kNumCellTypes; ++t)
      if (net.has_type[t] && !mix->has(t)) fail(ErrorKind::Contract, "missing mixture weights for cell type");
  }

  Rng rng(mix_seed(theta_seed, 0x7e));
  NodeId stem = build_stem(g, net.images, spec.channels, "stem", rng);
  StageIO prev_prev{stem, spec.image_hw};
  StageIO prev{stem, spec.image_hw};
  int width = spec.channels;
  for (int idx = 0; idx < spec.cells; ++idx) {
    const bool reduction = std::find(reduce_at.begin(), reduce_at.end(), idx) != reduce_at.end();
    if (reduction) width *= 2;
    const std::string cp = cell_prefix(idx);
    // When both predecessors are the same tensor (first cell reads the stem twice),
    // share one projection. Two independent projections of identical features hand
    // the edge selector an arbitrary persistent preference between input nodes.
    NodeId s1 = build_preprocess(g, prev.node, width, false, cp + ".pre1", rng);
    NodeId s0 = (prev_prev.node == prev.node && prev_prev.hw == prev.hw)
                    ? s1
                    : build_preprocess(g, prev_prev.node, width, prev_prev.hw != prev.hw, cp + ".pre0", rng);
    const int out_hw = reduction ? prev.hw / 2 : prev.hw;
    const int t = reduction ? kReduce : kNormal;
    NodeId out = build_cell(g, net.topo, s0, s1, reduction, width, spec.batch, out_hw, net.alpha_sm[t],
                            net.beta_sm[t], mix, t, cp, rng);
    prev_prev = prev;
    prev = {out, out_hw};
  }
  net.logits = build_classifier(g, prev.node, spec.classes, "head", rng);
  net.class_loss = g.cross_entropy_softmax(net.logits, net.labels);
  g.mark_output("logits", net.logits);
  g.mark_output("class_loss", net.class_loss);
  return net;
}

}  // namespace

SuperNetwork build_search_network(const NetworkSpec& spec, const ArchParams& init, std::uint64_t theta_seed) {
  return build_network(spec, &init, nullptr, theta_seed);
}

SuperNetwork build_fixed_network(const NetworkSpec& spec, const MixWeights& mix, std::uint64_t theta_seed) {
  return build_network(spec, nullptr, &mix, theta_seed);
}

}  // namespace entnas
