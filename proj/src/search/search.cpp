#include "search/search.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "common.hpp"

namespace entnas {

namespace {

constexpr std::uint64_t kWeightOrderStream = 0x3a;
constexpr std::uint64_t kArchOrderStream = 0x3b;
constexpr std::uint64_t kRetrainOrderStream = 0x3c;

real schedule_weight(const WeightSchedule& ws, int epoch, int total_epochs) {
  return ws.scale * schedule_value(ws.control, epoch, total_epochs);
}

LossReport mean_report(const std::vector<LossReport>& reports) {
  LossReport mean;
  if (reports.empty()) return mean;
  for (const LossReport& r : reports) {
    mean.class_loss += r.class_loss;
    mean.op_entropy += r.op_entropy;
    mean.edge_loss += r.edge_loss;
    mean.total += r.total;
  }
  const real n = static_cast<real>(reports.size());
  mean.class_loss /= n;
  mean.op_entropy /= n;
  mean.edge_loss /= n;
  mean.total /= n;
  mean.lambda_c = reports.back().lambda_c;
  mean.lambda_alpha = reports.back().lambda_alpha;
  mean.lambda_beta = reports.back().lambda_beta;
  return mean;
}

[[noreturn]] void rethrow_with_step(const Error& err, int epoch, int step) {
  fail(err.kind(),
       "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + err.what());
}

}  // namespace

void sgd_momentum_update(real* p, real* v, const real* grad, std::size_t n, real lr, real momentum,
                         real weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + (grad[i] + weight_decay * p[i]);
    p[i] -= lr * v[i];
  }
}

void adam_update(real* p, real* m1, real* m2, const real* grad, std::size_t n, long step, real lr, real beta1,
                 real beta2, real weight_decay, real eps) {
  const real corr1 = 1 - std::pow(beta1, static_cast<real>(step));
  const real corr2 = 1 - std::pow(beta2, static_cast<real>(step));
  for (std::size_t i = 0; i < n; ++i) {
    const real g = grad[i] + weight_decay * p[i];
    m1[i] = beta1 * m1[i] + (1 - beta1) * g;
    m2[i] = beta2 * m2[i] + (1 - beta2) * g * g;
    const real mhat = m1[i] / corr1;
    const real vhat = m2[i] / corr2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

real cosine_lr(int epoch, int total_epochs, real lr0) {
  if (epoch < 0 || epoch >= total_epochs)
    fail(ErrorKind::Contract, "cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                  std::to_string(total_epochs) + ")");
  return lr0 * (1 + std::cos(std::numbers::pi_v<real> * epoch / total_epochs)) / 2;
}

SgdMomentum::SgdMomentum(Graph& g, LeafRole role, real momentum, real weight_decay)
    : g_(&g), leaves_(g.leaves(role)), momentum_(momentum), weight_decay_(weight_decay) {
  for (NodeId id : leaves_) velocity_.push_back(Tensor::zeros(g.node(id).out.shape()));
}

void SgdMomentum::step(real lr) {
  for (std::size_t k = 0; k < leaves_.size(); ++k) {
    Tensor& value = g_->leaf_value(leaves_[k]);
    sgd_momentum_update(value.data(), velocity_[k].data(), g_->grad(leaves_[k]).data(), value.size(), lr, momentum_,
                        weight_decay_);
  }
}

Adam::Adam(Graph& g, LeafRole role, real lr, real beta1, real beta2, real weight_decay, real eps)
    : g_(&g), leaves_(g.leaves(role)), lr_(lr), beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay),
      eps_(eps) {
  for (NodeId id : leaves_) {
    m1_.push_back(Tensor::zeros(g.node(id).out.shape()));
    m2_.push_back(Tensor::zeros(g.node(id).out.shape()));
  }
}

void Adam::step() {
  ++t_;
  for (std::size_t k = 0; k < leaves_.size(); ++k) {
    Tensor& value = g_->leaf_value(leaves_[k]);
    adam_update(value.data(), m1_[k].data(), m2_[k].data(), g_->grad(leaves_[k]).data(), value.size(), t_, lr_,
                beta1_, beta2_, weight_decay_, eps_);
  }
}

void project_beta(Graph& g) {
  for (NodeId id : g.leaves(LeafRole::Beta)) {
    Tensor& value = g.leaf_value(id);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = std::min<real>(value[i], 1);
  }
}

SearchResult run_search(const SearchSettings& settings, const Dataset& data, const Normalizer& norm,
                        const StepCallback& on_step) {
  if (settings.epochs < 1) fail(ErrorKind::Config, "search: epochs must be >= 1");
  const CellTopology topo = CellTopology::make(settings.net.num_nodes);
  validate_groups(settings.groups, topo);
  if (data.classes != settings.net.classes)
    fail(ErrorKind::Config, "search: dataset has " + std::to_string(data.classes) + " classes, network expects " +
                                std::to_string(settings.net.classes));

  const bool with_reduce = !reduction_cells(settings.net.cells).empty();
  const ArchParams arch0 = init_arch_params(topo, with_reduce, settings.seed);
  SuperNetwork net = build_search_network(settings.net, arch0, settings.seed);
  const RegularizerNodes reg = wire_losses(net, settings.groups);
  Graph& g = net.graph;

  auto [weight_split, arch_split] = split_dataset(data, settings.split_fraction, settings.seed);
  const int batch = settings.net.batch;
  const int steps = std::min(weight_split.count() / batch, arch_split.count() / batch);
  if (steps < 1)
    fail(ErrorKind::Config, "search: splits of " + std::to_string(weight_split.count()) + "/" +
                                std::to_string(arch_split.count()) + " samples cannot fill a batch of " +
                                std::to_string(batch));

  const OptimSettings& opt = settings.optim;
  SgdMomentum sgd(g, LeafRole::Theta, opt.theta_momentum, opt.theta_weight_decay);
  Adam adam_alpha(g, LeafRole::Alpha, opt.arch_lr, opt.arch_beta1, opt.arch_beta2, opt.arch_weight_decay,
                  opt.adam_eps);
  Adam adam_beta(g, LeafRole::Beta, opt.arch_lr, opt.arch_beta1, opt.arch_beta2, opt.arch_weight_decay,
                 opt.adam_eps);

  SearchResult result;
  g.set_train(true);
  std::vector<LossReport> epoch_reports;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const real lr = cosine_lr(epoch, settings.epochs, opt.theta_lr0);
    const real lambda_c = schedule_weight(settings.lambda_c, epoch, settings.epochs);
    const real lambda_alpha = schedule_weight(settings.lambda_alpha, epoch, settings.epochs);
    const real lambda_beta = settings.beta_multiplier * schedule_weight(settings.lambda_beta, epoch, settings.epochs);
    set_loss_weights(g, reg, lambda_c, lambda_alpha, lambda_beta);

    const std::vector<int> weight_order =
        epoch_order(weight_split.count(), mix_seed(settings.seed, kWeightOrderStream), epoch);
    const std::vector<int> arch_order =
        epoch_order(arch_split.count(), mix_seed(settings.seed, kArchOrderStream), epoch);

    epoch_reports.clear();
    for (int s = 0; s < steps; ++s) {
      StepInfo info;
      info.epoch = epoch;
      info.step = s;
      info.theta_lr = lr;
      info.arch_lr = opt.arch_lr;
      try {
        const std::size_t at = static_cast<std::size_t>(s) * batch;
        const Batch wb = gather_batch(weight_split, weight_order, at, at + batch, batch, norm);
        g.bind("x", wb.x);
        g.bind("y", wb.y);
        g.evaluate();
        g.backward(net.class_loss);
        sgd.step(lr);
        info.weight_losses = read_loss_report(g, net.class_loss, reg, lambda_c, lambda_alpha, lambda_beta);

        const Batch ab = gather_batch(arch_split, arch_order, at, at + batch, batch, norm);
        g.bind("x", ab.x);
        g.bind("y", ab.y);
        g.evaluate();
        g.backward(reg.total);
        adam_alpha.step();
        adam_beta.step();
        project_beta(g);
        info.arch_losses = read_loss_report(g, net.class_loss, reg, lambda_c, lambda_alpha, lambda_beta);
      } catch (const Error& err) {
        rethrow_with_step(err, epoch, s);
      }
      epoch_reports.push_back(info.arch_losses);
      if (on_step) {
        const ArchParams snap = net.arch_snapshot();
        for (int t = 0; t < kNumCellTypes; ++t) {
          if (!snap.has(t)) continue;
          info.alpha_max[t] = edge_max_op_mass(snap, t);
          info.beta_mass[t] = group_topk_mass(snap, topo, settings.groups, t);
        }
        on_step(info);
      }
    }
    result.epoch_losses.push_back(mean_report(epoch_reports));
    result.snapshots.push_back(continuous_mix(net.arch_snapshot(), topo));
  }

  result.arch = net.arch_snapshot();
  result.params = g.export_params();
  result.buffers = g.export_buffers();
  result.genotype = derive_genotype(result.arch, topo, settings.groups, &result.warnings);
  return result;
}

RetrainResult train_subnetwork(const Genotype& geno, const RetrainSettings& settings, const Dataset& train_set,
                               const Dataset& eval_set, const Normalizer& norm, const RetrainCallback& on_step) {
  if (settings.epochs < 0) fail(ErrorKind::Config, "retrain: epochs must be >= 0");
  SuperNetwork net = instantiate_subnetwork(geno, settings.net, settings.seed);
  Graph& g = net.graph;
  SgdMomentum sgd(g, LeafRole::Theta, settings.optim.theta_momentum, settings.optim.theta_weight_decay);

  const int batch = settings.net.batch;
  RetrainResult result;
  g.set_train(true);
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const real lr = cosine_lr(epoch, settings.epochs, settings.optim.theta_lr0);
    const std::vector<int> order =
        epoch_order(train_set.count(), mix_seed(settings.seed, kRetrainOrderStream), epoch);
    const int steps = train_set.count() / batch;
    if (steps < 1)
      fail(ErrorKind::Config, "retrain: " + std::to_string(train_set.count()) +
                                  " samples cannot fill a batch of " + std::to_string(batch));
    real loss_sum = 0;
    for (int s = 0; s < steps; ++s) {
      try {
        const std::size_t at = static_cast<std::size_t>(s) * batch;
        const Batch b = gather_batch(train_set, order, at, at + batch, batch, norm);
        g.bind("x", b.x);
        g.bind("y", b.y);
        g.evaluate();
        g.backward(net.class_loss);
        sgd.step(lr);
      } catch (const Error& err) {
        rethrow_with_step(err, epoch, s);
      }
      const real loss = g.value(net.class_loss)[0];
      loss_sum += loss;
      if (on_step) on_step(epoch, s, lr, loss);
    }
    result.epoch_mean_loss.push_back(loss_sum / steps);
  }
  result.eval_accuracy = accuracy_on(net, eval_set, norm);
  return result;
}

}  // namespace entnas
