#pragma once

#include <string>
#include <vector>

#include "supernet/supernet.hpp"

namespace entnas {

// A set of candidate edges constrained to keep exactly k members. Groups
// partition a cell type's edge set.
struct EdgeGroup {
  std::vector<int> edges;  // indices into CellTopology::edges
  int k = 1;
};

// Throws a config error unless the groups partition the topology's edges and
// every k fits its group.
void validate_groups(const std::vector<EdgeGroup>& groups, const CellTopology& topo);

// Named presets. "balanced-8" keeps 2 edges per intermediate node (any
// topology); the "imbalanced-3/4/5/6" presets encode the 6-node groupings
// {n2+n3:1, n4:1, n5:1}, {1,1,1,1}, {1,1,1,2} and {1,1,2,2}.
std::vector<EdgeGroup> group_preset(const std::string& name, const CellTopology& topo);
bool is_group_preset(const std::string& name);

// ---- regularization control functions ----

enum class ScheduleKind { Const, Linear, Exp, Log, Step };

ScheduleKind schedule_kind_from_name(const std::string& name);  // config error on unknown
const char* schedule_kind_name(ScheduleKind kind);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Const;
  int activation_epoch = 0;  // value is 0 for epochs before this
  real k = 5;                // curvature of exp/log
  real t0 = real(0.5);       // threshold of step
};

// Value in [0,1]: const -> 1, linear -> t, exp -> (e^{kt}-1)/(e^k-1),
// log -> ln(1+kt)/ln(1+k), step -> [t >= t0], with
// t = (epoch - activation)/(total_epochs - 1 - activation), 0 before activation.
real schedule_value(const ScheduleSpec& spec, int epoch, int total_epochs);

// ---- loss terms ----

// Entropy of softmax(logits) with a 1e-12 probability floor inside the log.
real op_entropy_edge(const real* alpha_logits, int count);
// Sum of per-edge entropies over every edge of every present cell type.
real op_entropy_total(const ArchParams& arch, const CellTopology& topo);
// Entropy of softmax over the group + |sum of positive betas - k|^2.
real edge_group_loss(const std::vector<real>& betas, int k);
// Sum of edge_group_loss over groups, over present cell types.
real edge_loss_total(const ArchParams& arch, const CellTopology& topo, const std::vector<EdgeGroup>& groups);

struct LossReport {
  real class_loss = 0;
  real op_entropy = 0;
  real edge_loss = 0;
  real lambda_c = 0;
  real lambda_alpha = 0;
  real lambda_beta = 0;
  real total = 0;
};

LossReport make_loss_report(real class_loss, real op_entropy, real edge_loss, real lambda_c, real lambda_alpha,
                            real lambda_beta);

// ---- in-graph wiring ----

// Handles to the loss subgraph appended to a search-mode network. The three
// scalar_scale nodes carry the lambda weights; retune them per epoch with
// set_loss_weights before evaluating.
struct RegularizerNodes {
  NodeId op_entropy = -1;
  NodeId edge_loss = -1;
  NodeId scaled_op = -1;    // lambda_alpha * L_O
  NodeId scaled_edge = -1;  // lambda_beta  * L_E
  NodeId scaled_combo = -1; // lambda_c * (...)
  NodeId total = -1;        // L_C + lambda_c * (lambda_alpha*L_O + lambda_beta*L_E)
};

RegularizerNodes wire_losses(SuperNetwork& net, const std::vector<EdgeGroup>& groups);
void set_loss_weights(Graph& g, const RegularizerNodes& nodes, real lambda_c, real lambda_alpha, real lambda_beta);

// Reads the wired loss values after an evaluate().
LossReport read_loss_report(const Graph& g, NodeId class_loss, const RegularizerNodes& nodes, real lambda_c,
                            real lambda_alpha, real lambda_beta);

}  // namespace entnas
