#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "discretize/discretize.hpp"

namespace entnas {

// ---- raw update kernels ----
// Kept free-standing so they can be checked against hand-rolled traces.

// v <- momentum*v + (grad + weight_decay*p); p <- p - lr*v
void sgd_momentum_update(real* p, real* v, const real* grad, std::size_t n, real lr, real momentum,
                         real weight_decay);

// Bias-corrected Adam; weight decay is added to the gradient (L2 style).
// `step` counts from 1.
void adam_update(real* p, real* m1, real* m2, const real* grad, std::size_t n, long step, real lr, real beta1,
                 real beta2, real weight_decay, real eps);

// lr0 * (1 + cos(pi * epoch / total)) / 2; epoch must lie in [0, total).
real cosine_lr(int epoch, int total_epochs, real lr0);

// ---- graph-bound optimizers ----
// Each instance owns state for one leaf role of one graph; the leaf set is
// frozen at construction.

class SgdMomentum {
 public:
  SgdMomentum(Graph& g, LeafRole role, real momentum, real weight_decay);
  void step(real lr);  // consumes the gradients of the last backward()

 private:
  Graph* g_;
  std::vector<NodeId> leaves_;
  std::vector<Tensor> velocity_;
  real momentum_, weight_decay_;
};

class Adam {
 public:
  Adam(Graph& g, LeafRole role, real lr, real beta1, real beta2, real weight_decay, real eps = real(1e-8));
  void step();

 private:
  Graph* g_;
  std::vector<NodeId> leaves_;
  std::vector<Tensor> m1_, m2_;
  real lr_, beta1_, beta2_, weight_decay_, eps_;
  long t_ = 0;
};

// Clamps every raw edge logit to <= 1, outside the differentiation tape.
void project_beta(Graph& g);

// ---- run drivers ----

struct OptimSettings {
  real theta_lr0 = real(0.25);
  real theta_momentum = real(0.9);
  real theta_weight_decay = real(3e-4);
  real arch_lr = real(3e-4);
  real arch_beta1 = real(0.5);
  real arch_beta2 = real(0.999);
  real arch_weight_decay = real(1e-3);
  real adam_eps = real(1e-8);
};

// One loss weight over time: scale * control(epoch), control in [0,1].
struct WeightSchedule {
  ScheduleSpec control;
  real scale = 1;
};

struct SearchSettings {
  NetworkSpec net;
  std::vector<EdgeGroup> groups;       // on the net.num_nodes topology
  int epochs = 30;
  real split_fraction = real(0.5);
  WeightSchedule lambda_c;             // weight of the whole regularizer block
  WeightSchedule lambda_alpha;         // op-entropy weight inside the block
  WeightSchedule lambda_beta;          // edge-loss weight inside the block
  real beta_multiplier = 4;            // extra factor on lambda_beta
  OptimSettings optim;
  std::uint64_t seed = 1;
};

// One paired optimization step: a theta update on the weight split followed
// by an (alpha, beta) update on the architecture split.
struct StepInfo {
  int epoch = 0;
  int step = 0;
  real theta_lr = 0;
  real arch_lr = 0;
  LossReport weight_losses;  // evaluated on the weight-split batch
  LossReport arch_losses;    // evaluated on the architecture-split batch
  // selection masses after the arch update, empty for absent cell types
  std::vector<real> alpha_max[kNumCellTypes];
  std::vector<real> beta_mass[kNumCellTypes];
};
using StepCallback = std::function<void(const StepInfo&)>;

struct SearchResult {
  ArchParams arch;                        // final raw logits
  std::map<std::string, Tensor> params;   // all trainable leaves, incl. arch
  std::map<std::string, Tensor> buffers;  // batch-standardization statistics
  std::vector<LossReport> epoch_losses;   // mean arch-batch losses, one per epoch
  std::vector<MixWeights> snapshots;      // softmax views, one per epoch
  Genotype genotype;
  std::vector<std::string> warnings;      // derivation tie logs
};

// Alternating bi-level search. Deterministic per (settings, data); numeric
// failures carry epoch/step context. `data` is split internally.
SearchResult run_search(const SearchSettings& settings, const Dataset& data, const Normalizer& norm,
                        const StepCallback& on_step = {});

struct RetrainSettings {
  NetworkSpec net;
  int epochs = 20;
  OptimSettings optim;  // only the SGD constants are read
  std::uint64_t seed = 1;
};

using RetrainCallback = std::function<void(int epoch, int step, real lr, real loss)>;

struct RetrainResult {
  real eval_accuracy = 0;              // fraction on eval_set, final parameters
  std::vector<real> epoch_mean_loss;   // one entry per epoch
};

// From-scratch training of the discrete network on the full training set.
RetrainResult train_subnetwork(const Genotype& geno, const RetrainSettings& settings, const Dataset& train_set,
                               const Dataset& eval_set, const Normalizer& norm, const RetrainCallback& on_step = {});

}  // namespace entnas
