#pragma once

#include <utility>
#include <vector>

#include "ops/ops.hpp"

namespace entnas {

// Cell types. Same-type cells share one set of architecture parameters.
enum CellType { kNormal = 0, kReduce = 1 };
constexpr int kNumCellTypes = 2;

// DAG skeleton of one cell: nodes 0..N-1, the first two are inputs, the rest
// are intermediates whose outputs are concatenated. Edges are ordered by
// (destination, source), which fixes the layout of alpha/beta tensors.
struct CellTopology {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // (i, j), i < j, j >= 2

  static CellTopology make(int num_nodes);
  int edge_count() const { return static_cast<int>(edges.size()); }
  int edge_index(int i, int j) const;               // contract error when absent
  std::vector<int> node_edges(int j) const;         // edge indices into node j
  int intermediate_nodes() const { return num_nodes - 2; }
};

// Raw architecture logits per cell type. Tensors are empty when a network
// contains no cell of that type.
struct ArchParams {
  Tensor alpha[kNumCellTypes];  // (edges, |O|)
  Tensor beta[kNumCellTypes];   // (edges)
  bool has(int type) const { return alpha[type].size() > 0; }
};

// Explicit mixture weights used verbatim by fixed-weight builds: either the
// softmax view of ArchParams (continuous probe) or 0/1 indicators (one-hot
// probe, sub-network). Not logits.
struct MixWeights {
  Tensor op[kNumCellTypes];    // (edges, |O|)
  Tensor edge[kNumCellTypes];  // (edges)
  bool has(int type) const { return op[type].size() > 0; }
};

struct NetworkSpec {
  int cells = 8;
  int channels = 16;
  int num_nodes = 6;
  int classes = 10;
  int image_hw = 32;  // square inputs
  int batch = 64;
};

// A built network: the graph plus handles to the nodes that search and
// probing need. Search-mode builds also expose the architecture leaves and their
// softmax views; fixed-mode builds leave those handles at -1.
struct SuperNetwork {
  NetworkSpec spec;
  CellTopology topo;
  Graph graph;
  NodeId images = -1;      // input "x": (batch, 3, hw, hw)
  NodeId labels = -1;      // input "y": one-hot (batch, classes)
  NodeId logits = -1;      // (batch, classes)
  NodeId class_loss = -1;  // scalar cross-entropy
  bool has_type[kNumCellTypes] = {false, false};
  NodeId alpha_leaf[kNumCellTypes] = {-1, -1};
  NodeId beta_leaf[kNumCellTypes] = {-1, -1};
  NodeId alpha_sm[kNumCellTypes] = {-1, -1};        // softmax(alpha) rows
  std::vector<NodeId> beta_sm[kNumCellTypes];       // per destination node

  ArchParams arch_snapshot() const;  // current alpha/beta leaf values
};

// Indices of reduction cells: {L/3, 2L/3} for L >= 3, {1} for L == 2.
std::vector<int> reduction_cells(int cells);

// Near-zero logits so every softmax starts out almost uniform.
ArchParams init_arch_params(const CellTopology& topo, bool with_reduce, std::uint64_t seed);

// Softmax view of ArchParams: rows of alpha, per-node groups of beta.
MixWeights continuous_mix(const ArchParams& arch, const CellTopology& topo);

// Numerically stable softmax of an arbitrary slice, used wherever arch logits
// are turned into probabilities outside the graph.
std::vector<real> softmax_values(const real* logits, int count);

SuperNetwork build_search_network(const NetworkSpec& spec, const ArchParams& init, std::uint64_t theta_seed);
SuperNetwork build_fixed_network(const NetworkSpec& spec, const MixWeights& mix, std::uint64_t theta_seed);

}  // namespace entnas
