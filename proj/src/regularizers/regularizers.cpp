#include "regularizers/regularizers.hpp"

#include <algorithm>
#include <cmath>

namespace entnas {

namespace {

constexpr real kProbFloor = real(1e-12);

}  // namespace

void validate_groups(const std::vector<EdgeGroup>& groups, const CellTopology& topo) {
  if (groups.empty()) fail(ErrorKind::Config, "groups: at least one group required");
  std::vector<int> seen(static_cast<size_t>(topo.edge_count()), 0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const EdgeGroup& g = groups[gi];
    if (g.edges.empty()) fail(ErrorKind::Config, "groups[" + std::to_string(gi) + "]: empty edge list");
    if (g.k < 1 || g.k > static_cast<int>(g.edges.size()))
      fail(ErrorKind::Config, "groups[" + std::to_string(gi) + "]: k=" + std::to_string(g.k) +
                                  " must be in [1, " + std::to_string(g.edges.size()) + "]");
    for (int e : g.edges) {
      if (e < 0 || e >= topo.edge_count())
        fail(ErrorKind::Config, "groups[" + std::to_string(gi) + "]: edge index " + std::to_string(e) +
                                    " out of range");
      if (seen[static_cast<size_t>(e)]++)
        fail(ErrorKind::Config, "groups overlap at edge index " + std::to_string(e));
    }
  }
  for (int e = 0; e < topo.edge_count(); ++e)
    if (!seen[static_cast<size_t>(e)])
      fail(ErrorKind::Config, "groups do not cover edge index " + std::to_string(e));
}

namespace {

EdgeGroup node_group(const CellTopology& topo, int j, int k) { return {topo.node_edges(j), k}; }

void require_six_nodes(const std::string& name, const CellTopology& topo) {
  if (topo.num_nodes != 6)
    fail(ErrorKind::Config, "group preset '" + name + "' is defined for 6-node cells, got " +
                                std::to_string(topo.num_nodes));
}

}  // namespace

std::vector<EdgeGroup> group_preset(const std::string& name, const CellTopology& topo) {
  std::vector<EdgeGroup> groups;
  if (name == "balanced-8") {
    for (int j = 2; j < topo.num_nodes; ++j) groups.push_back(node_group(topo, j, 2));
  } else if (name == "imbalanced-3") {
    require_six_nodes(name, topo);
    EdgeGroup merged = node_group(topo, 2, 1);
    for (int e : topo.node_edges(3)) merged.edges.push_back(e);
    groups = {merged, node_group(topo, 4, 1), node_group(topo, 5, 1)};
  } else if (name == "imbalanced-4") {
    require_six_nodes(name, topo);
    groups = {node_group(topo, 2, 1), node_group(topo, 3, 1), node_group(topo, 4, 1), node_group(topo, 5, 1)};
  } else if (name == "imbalanced-5") {
    require_six_nodes(name, topo);
    groups = {node_group(topo, 2, 1), node_group(topo, 3, 1), node_group(topo, 4, 1), node_group(topo, 5, 2)};
  } else if (name == "imbalanced-6") {
    require_six_nodes(name, topo);
    groups = {node_group(topo, 2, 1), node_group(topo, 3, 1), node_group(topo, 4, 2), node_group(topo, 5, 2)};
  } else {
    fail(ErrorKind::Config, "unknown group preset '" + name + "'");
  }
  validate_groups(groups, topo);
  return groups;
}

bool is_group_preset(const std::string& name) {
  static const char* known[] = {"balanced-8", "imbalanced-3", "imbalanced-4", "imbalanced-5", "imbalanced-6"};
  return std::find_if(std::begin(known), std::end(known), [&](const char* k) { return name == k; }) !=
         std::end(known);
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
  if (name == "const") return ScheduleKind::Const;
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "exp") return ScheduleKind::Exp;
  if (name == "log") return ScheduleKind::Log;
  if (name == "step") return ScheduleKind::Step;
  fail(ErrorKind::Config, "unknown schedule kind '" + name + "' (want const|linear|exp|log|step)");
}

const char* schedule_kind_name(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Const: return "const";
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Exp: return "exp";
    case ScheduleKind::Log: return "log";
    case ScheduleKind::Step: return "step";
  }
  return "?";
}

real schedule_value(const ScheduleSpec& spec, int epoch, int total_epochs) {
  if (epoch < 0 || epoch >= total_epochs)
    fail(ErrorKind::Contract, "schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                                  std::to_string(total_epochs) + ")");
  if (epoch < spec.activation_epoch) return 0;
  const int denom = total_epochs - 1 - spec.activation_epoch;
  // activation at (or past) the final epoch: the one active epoch runs at full strength
  const real t = denom <= 0 ? real(1) : static_cast<real>(epoch - spec.activation_epoch) / denom;
  switch (spec.kind) {
    case ScheduleKind::Const: return 1;
    case ScheduleKind::Linear: return t;
    case ScheduleKind::Exp: return (std::exp(spec.k * t) - 1) / (std::exp(spec.k) - 1);
    case ScheduleKind::Log: return std::log(1 + spec.k * t) / std::log(1 + spec.k);
    case ScheduleKind::Step: return t < spec.t0 ? real(0) : real(1);
  }
  fail(ErrorKind::Config, "invalid schedule kind");
}

real op_entropy_edge(const real* alpha_logits, int count) {
  if (count < 1) fail(ErrorKind::Contract, "op_entropy_edge: empty logit vector");
  const std::vector<real> p = softmax_values(alpha_logits, count);
  real h = 0;
  for (real v : p) h -= v * std::log(std::max(v, kProbFloor));
  return h;
}

real op_entropy_total(const ArchParams& arch, const CellTopology& topo) {
  real total = 0;
  for (int t = 0; t < kNumCellTypes; ++t) {
    if (!arch.has(t)) continue;
    for (int e = 0; e < topo.edge_count(); ++e)
      total += op_entropy_edge(arch.alpha[t].data() + static_cast<std::size_t>(e) * kNumOps, kNumOps);
  }
  return total;
}

real edge_group_loss(const std::vector<real>& betas, int k) {
  if (betas.empty()) fail(ErrorKind::Contract, "edge_group_loss: empty group");
  const std::vector<real> p = softmax_values(betas.data(), static_cast<int>(betas.size()));
  real h = 0;
  for (real v : p) h -= v * std::log(std::max(v, kProbFloor));
  real positive_sum = 0;
  for (real b : betas)
    if (b > 0) positive_sum += b;
  const real dev = positive_sum - static_cast<real>(k);
  return h + dev * dev;
}

real edge_loss_total(const ArchParams& arch, const CellTopology& topo, const std::vector<EdgeGroup>& groups) {
  validate_groups(groups, topo);
  real total = 0;
  for (int t = 0; t < kNumCellTypes; ++t) {
    if (!arch.has(t)) continue;
    for (const EdgeGroup& g : groups) {
      std::vector<real> betas;
      for (int e : g.edges) betas.push_back(arch.beta[t][static_cast<size_t>(e)]);
      total += edge_group_loss(betas, g.k);
    }
  }
  return total;
}

LossReport make_loss_report(real class_loss, real op_entropy, real edge_loss, real lambda_c, real lambda_alpha,
                            real lambda_beta) {
  LossReport r;
  r.class_loss = class_loss;
  r.op_entropy = op_entropy;
  r.edge_loss = edge_loss;
  r.lambda_c = lambda_c;
  r.lambda_alpha = lambda_alpha;
  r.lambda_beta = lambda_beta;
  r.total = class_loss + lambda_c * (lambda_alpha * op_entropy + lambda_beta * edge_loss);
  return r;
}

RegularizerNodes wire_losses(SuperNetwork& net, const std::vector<EdgeGroup>& groups) {
  validate_groups(groups, net.topo);
  Graph& g = net.graph;
  RegularizerNodes nodes;
  std::vector<NodeId> entropy_terms, edge_terms;
  for (int t = 0; t < kNumCellTypes; ++t) {
    if (!net.has_type[t]) continue;
    if (net.alpha_sm[t] < 0)
      fail(ErrorKind::Contract, "wire_losses requires a search-mode network (live softmax nodes)");
    // L_O for this cell type: -sum over all (edge, op) entries of p log p
    NodeId p = net.alpha_sm[t];
    entropy_terms.push_back(g.scalar_scale(g.sum(g.mul(p, g.log(p, kProbFloor))), -1));
    for (const EdgeGroup& grp : groups) {
      NodeId betas = g.gather(net.beta_leaf[t], grp.edges);
      NodeId q = g.softmax(betas, 0);
      NodeId ent = g.scalar_scale(g.sum(g.mul(q, g.log(q, kProbFloor))), -1);
      NodeId card = g.square(g.scalar_scale(g.sum(g.relu(betas)), 1, -static_cast<real>(grp.k)));
      edge_terms.push_back(g.add({ent, card}));
    }
  }
  nodes.op_entropy = entropy_terms.size() == 1 ? entropy_terms[0] : g.add(entropy_terms);
  nodes.edge_loss = edge_terms.size() == 1 ? edge_terms[0] : g.add(edge_terms);
  nodes.scaled_op = g.scalar_scale(nodes.op_entropy, 0);
  nodes.scaled_edge = g.scalar_scale(nodes.edge_loss, 0);
  nodes.scaled_combo = g.scalar_scale(g.add({nodes.scaled_op, nodes.scaled_edge}), 0);
  nodes.total = g.add({net.class_loss, nodes.scaled_combo});
  g.mark_output("op_entropy", nodes.op_entropy);
  g.mark_output("edge_loss", nodes.edge_loss);
  g.mark_output("total_loss", nodes.total);
  return nodes;
}

void set_loss_weights(Graph& g, const RegularizerNodes& nodes, real lambda_c, real lambda_alpha, real lambda_beta) {
  g.set_scale(nodes.scaled_op, lambda_alpha);
  g.set_scale(nodes.scaled_edge, lambda_beta);
  g.set_scale(nodes.scaled_combo, lambda_c);
}

LossReport read_loss_report(const Graph& g, NodeId class_loss, const RegularizerNodes& nodes, real lambda_c,
                            real lambda_alpha, real lambda_beta) {
  return make_loss_report(g.value(class_loss).item(), g.value(nodes.op_entropy).item(),
                          g.value(nodes.edge_loss).item(), lambda_c, lambda_alpha, lambda_beta);
}

}  // namespace entnas
