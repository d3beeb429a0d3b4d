#pragma once

#include <map>
#include <string>
#include <vector>

#include "data/data.hpp"
#include "regularizers/regularizers.hpp"

namespace entnas {

struct GenotypeEdge {
  int i = 0, j = 0;          // source, destination node
  OpKind op = OpKind::SkipConnect;
};

// A discrete architecture: per cell type, the kept edges with their chosen
// operations, plus the group configuration that produced them.
struct Genotype {
  int num_nodes = 0;
  std::vector<GenotypeEdge> kept[kNumCellTypes];  // ordered by (j, i)
  std::vector<EdgeGroup> groups;
  bool has(int type) const { return !kept[type].empty(); }
};

// Per edge: argmax over the operation weights. Per group: the k edges with
// the largest edge weight, ranked by softmax over the group (equivalently by
// raw logit; softmax is monotone within a group). Exact ties at a selection
// boundary resolve to the lexicographically smallest (i, j, op index) and are
// reported through `warnings`.
Genotype derive_genotype(const ArchParams& arch, const CellTopology& topo, const std::vector<EdgeGroup>& groups,
                         std::vector<std::string>* warnings = nullptr);

// Same selection rule applied to explicit mixture weights. Re-deriving from
// one_hot_weights(geno) returns geno.
Genotype derive_from_weights(const MixWeights& mix, const CellTopology& topo, const std::vector<EdgeGroup>& groups,
                             std::vector<std::string>* warnings = nullptr);

// Indicator weights for a genotype: kept (edge, op) pairs get weight exactly
// 1, everything else 0. Dropped edges therefore contribute no flow at all.
MixWeights one_hot_weights(const Genotype& geno, const CellTopology& topo);

// ---- selection-mass metrics (also feed the per-step metrics stream) ----

// max softmax(alpha) per edge, one vector per present cell type.
std::vector<real> edge_max_op_mass(const ArchParams& arch, int type);
// Sum of the k largest group-softmax(beta) masses, one value per group.
std::vector<real> group_topk_mass(const ArchParams& arch, const CellTopology& topo,
                                  const std::vector<EdgeGroup>& groups, int type);

// ---- serialization ----

std::string genotype_to_json(const Genotype& geno);
// Validates keys, op names, edge indices and group consistency; format errors
// carry the offending field path.
Genotype genotype_from_json(const std::string& text);

// ---- probing ----

struct GapReport {
  real continuous_acc = 0;  // percent
  real onehot_acc = 0;      // percent
  real drop = 0;            // continuous - onehot
  // softmax(alpha) mass of the chosen op, per kept edge, (j,i)-ordered
  std::vector<real> kept_op_mass[kNumCellTypes];
  // top-k group-softmax(beta) mass per group
  std::vector<real> kept_edge_mass[kNumCellTypes];
};

std::string gap_report_to_json(const GapReport& report);

// Fraction of correctly classified samples, evaluated in inference mode in
// padded fixed-size chunks. `net.graph` must already hold trained parameters.
real accuracy_on(SuperNetwork& net, const Dataset& ds, const Normalizer& norm);

// Builds two fixed-weight networks from one trained checkpoint - softmax
// weights vs one-hot weights - and evaluates both on the same data with the
// same frozen batch statistics.
GapReport gap_probe(const NetworkSpec& spec, const ArchParams& arch, const Genotype& geno,
                    const std::map<std::string, Tensor>& theta, const std::map<std::string, Tensor>& buffers,
                    const Dataset& eval_set, const Normalizer& norm);

// Fresh discrete network for from-scratch retraining: only kept edges and
// ops are instantiated.
SuperNetwork instantiate_subnetwork(const Genotype& geno, const NetworkSpec& spec, std::uint64_t theta_seed);

}  // namespace entnas
