// Acceptance gate: nine end-to-end behavior checks, one [PASS]/[FAIL] line
// each, exit status = number of failures. Tolerances are pinned here, next to
// the checks that use them, so a red line always names the measured value.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "autodiff/graph.hpp"
#include "data/data.hpp"
#include "discretize/discretize.hpp"
#include "io/container.hpp"
#include "regularizers/regularizers.hpp"
#include "run/runner.hpp"
#include "search/search.hpp"
#include "supernet/supernet.hpp"

#include "json.hpp"

using namespace entnas;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", index, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string last_line(const std::string& text) {
  std::size_t end = text.size();
  while (end > 0 && text[end - 1] == '\n') --end;
  const std::size_t start = text.rfind('\n', end - 1);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1));
}

fs::path g_root;  // scratch directory for runs and fixtures

std::string write_config(const json& cfg, const std::string& name) {
  const fs::path p = g_root / name;
  std::ofstream out(p);
  out << cfg.dump(2) << "\n";
  return p.string();
}

// ---------------------------------------------------------------------------
// 1. gradient correctness: central finite differences against backward() for
//    every primitive and for the wired loss terms.

constexpr double kFdRtol = 1e-4;

struct FdStats {
  double max_rel = 0;
  long checks = 0;
  std::string worst;
};

double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  return d / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Perturbs every requested coordinate of `leaf` and compares the central
// difference of each watched scalar node with the recorded gradient.
void fd_check(Graph& g, NodeId leaf, const std::vector<NodeId>& losses, const std::vector<int>& coords,
              FdStats& st, const char* tag) {
  std::vector<std::vector<real>> grads(losses.size());
  for (std::size_t li = 0; li < losses.size(); ++li) {
    g.evaluate();
    g.backward(losses[li]);
    const Tensor& gr = g.grad(leaf);
    grads[li].assign(gr.data(), gr.data() + gr.size());
  }
  Tensor& v = g.leaf_value(leaf);
  for (int c : coords) {
    const real x0 = v.data()[c];
    const real h = real(1e-5) * std::max(real(1), std::abs(x0));
    v.data()[c] = x0 + h;
    g.evaluate();
    std::vector<real> up(losses.size());
    for (std::size_t li = 0; li < losses.size(); ++li) up[li] = g.value(losses[li]).data()[0];
    v.data()[c] = x0 - h;
    g.evaluate();
    for (std::size_t li = 0; li < losses.size(); ++li) {
      const double fd = (up[li] - g.value(losses[li]).data()[0]) / (2 * h);
      const double e = rel_err(fd, grads[li][static_cast<std::size_t>(c)]);
      ++st.checks;
      if (e > st.max_rel) {
        st.max_rel = e;
        st.worst = std::string(tag) + " coord " + std::to_string(c);
      }
    }
    v.data()[c] = x0;
  }
}

Tensor rnd_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = real(d(rng));
  return t;
}

// Values with pairwise gaps far above the finite-difference step, so pooling
// argmaxes cannot flip under the probe.
Tensor distinct_tensor(std::vector<int> shape, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); ++i) t.data()[order[i]] = real(0.013) * real(i);
  return t;
}

// Random values bounded away from zero; for operations with a kink there.
Tensor offzero_tensor(std::vector<int> shape, std::mt19937_64& rng, double mag) {
  Tensor t = rnd_tensor(std::move(shape), rng, 0.05, mag);
  std::bernoulli_distribution flip(0.5);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (flip(rng)) t.data()[i] = -t.data()[i];
  return t;
}

std::vector<int> all_coords(const Tensor& t) {
  std::vector<int> c(t.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<int>(i);
  return c;
}

void check_primitives(std::mt19937_64& rng, FdStats& st) {
  constexpr int kInstances = 20;
  for (int inst = 0; inst < kInstances; ++inst) {
    {  // add / mul / scalar_scale / square / sum chain
      Graph g;
      NodeId a = g.param(LeafRole::Theta, "a", rnd_tensor({2, 3}, rng, -1, 1));
      NodeId b = g.param(LeafRole::Theta, "b", rnd_tensor({2, 3}, rng, -1, 1));
      NodeId c = g.param(LeafRole::Theta, "c", rnd_tensor({2, 3}, rng, -1, 1));
      NodeId s = g.add({a, b, c});
      NodeId m = g.mul(s, g.constant(rnd_tensor({2, 3}, rng, -1, 1)));
      NodeId loss = g.sum(g.square(g.scalar_scale(m, real(1.7), real(0.3))));
      fd_check(g, a, {loss}, all_coords(g.value(a)), st, "add/mul/scale");
      fd_check(g, b, {loss}, {0, 3, 5}, st, "add/mul/scale");
    }
    {  // abs away from the kink
      Graph g;
      NodeId a = g.param(LeafRole::Theta, "a", offzero_tensor({3, 4}, rng, 1.5));
      NodeId loss = g.sum(g.mul(g.abs(a), g.constant(rnd_tensor({3, 4}, rng, 0.5, 1.5))));
      fd_check(g, a, {loss}, all_coords(g.value(a)), st, "abs");
    }
    {  // scale_by picks one coefficient
      Graph g;
      NodeId coeffs = g.param(LeafRole::Theta, "k", rnd_tensor({4}, rng, -1, 1));
      NodeId x = g.param(LeafRole::Theta, "x", rnd_tensor({2, 3}, rng, -1, 1));
      NodeId loss = g.sum(g.mul(g.scale_by(x, coeffs, 2), g.constant(rnd_tensor({2, 3}, rng, -1, 1))));
      fd_check(g, coeffs, {loss}, {0, 1, 2, 3}, st, "scale_by");
      fd_check(g, x, {loss}, {0, 4}, st, "scale_by");
    }
    {  // matmul
      Graph g;
      NodeId a = g.param(LeafRole::Theta, "a", rnd_tensor({3, 4}, rng, -1, 1));
      NodeId b = g.param(LeafRole::Theta, "b", rnd_tensor({4, 2}, rng, -1, 1));
      NodeId loss = g.sum(g.mul(g.matmul(a, b), g.constant(rnd_tensor({3, 2}, rng, -1, 1))));
      fd_check(g, a, {loss}, all_coords(g.value(a)), st, "matmul");
      fd_check(g, b, {loss}, all_coords(g.value(b)), st, "matmul");
    }
    {  // conv2d, plain and dilated
      Graph g;
      NodeId x = g.param(LeafRole::Theta, "x", rnd_tensor({2, 3, 6, 6}, rng, -1, 1));
      NodeId w = g.param(LeafRole::Theta, "w", rnd_tensor({4, 3, 3, 3}, rng, -1, 1));
      NodeId y = g.conv2d(x, w, inst % 2 ? 2 : 1, 1);
      NodeId w2 = g.param(LeafRole::Theta, "w2", rnd_tensor({2, 4, 3, 3}, rng, -1, 1));
      NodeId y2 = g.conv2d(y, w2, 1, 2);
      NodeId loss = g.sum(g.mul(y2, g.constant(rnd_tensor(g.value(y2).shape(), rng, -1, 1))));
      fd_check(g, w, {loss}, {0, 17, 40, 80, 107}, st, "conv2d");
      fd_check(g, x, {loss}, {0, 51, 100, 215}, st, "conv2d");
      fd_check(g, w2, {loss}, {0, 35, 71}, st, "conv2d-dilated");
    }
    {  // depthwise conv
      Graph g;
      NodeId x = g.param(LeafRole::Theta, "x", rnd_tensor({2, 4, 6, 6}, rng, -1, 1));
      NodeId w = g.param(LeafRole::Theta, "w", rnd_tensor({4, 3, 3}, rng, -1, 1));
      NodeId y = g.depthwise_conv2d(x, w, 1, inst % 2 ? 2 : 1);
      NodeId loss = g.sum(g.mul(y, g.constant(rnd_tensor(g.value(y).shape(), rng, -1, 1))));
      fd_check(g, w, {loss}, all_coords(g.value(w)), st, "depthwise");
      fd_check(g, x, {loss}, {0, 77, 200}, st, "depthwise");
    }
    {  // relu away from the kink
      Graph g;
      NodeId x = g.param(LeafRole::Theta, "x", offzero_tensor({3, 8}, rng, 1.2));
      NodeId loss = g.sum(g.mul(g.relu(x), g.constant(rnd_tensor({3, 8}, rng, -1, 1))));
      fd_check(g, x, {loss}, all_coords(g.value(x)), st, "relu");
    }
    {  // pooling trio on tie-free inputs
      Graph g;
      NodeId x = g.param(LeafRole::Theta, "x", distinct_tensor({2, 2, 6, 6}, rng));
      NodeId m = g.max_pool3(x, inst % 2 ? 2 : 1);
      NodeId a = g.avg_pool(x, 3, 2);
      NodeId ga = g.global_avg_pool(x);
      NodeId lm = g.sum(g.mul(m, g.constant(rnd_tensor(g.value(m).shape(), rng, -1, 1))));
      NodeId la = g.sum(g.mul(a, g.constant(rnd_tensor(g.value(a).shape(), rng, -1, 1))));
      NodeId lg = g.sum(g.mul(ga, g.constant(rnd_tensor(g.value(ga).shape(), rng, -1, 1))));
      fd_check(g, x, {lm, la, lg}, {0, 13, 37, 62, 71}, st, "pooling");
    }
    {  // concat + batch_norm
      Graph g;
      NodeId x1 = g.param(LeafRole::Theta, "x1", rnd_tensor({4, 2, 4, 4}, rng, -1, 1));
      NodeId x2 = g.param(LeafRole::Theta, "x2", rnd_tensor({4, 3, 4, 4}, rng, -1, 1));
      NodeId y = g.batch_norm(g.concat_channels({x1, x2}), "bn");
      NodeId loss = g.sum(g.mul(y, g.constant(rnd_tensor(g.value(y).shape(), rng, -1, 1))));
      fd_check(g, x1, {loss}, {0, 21, 63}, st, "concat/batch_norm");
      fd_check(g, x2, {loss}, {0, 50, 95}, st, "concat/batch_norm");
    }
    {  // softmax + floored log
      Graph g;
      NodeId x = g.param(LeafRole::Theta, "x", rnd_tensor({3, 5}, rng, -2, 2));
      NodeId p = g.softmax(x, 1);
      NodeId loss = g.sum(g.mul(g.mul(p, g.log(p, real(1e-12))), g.constant(rnd_tensor({3, 5}, rng, 0.5, 1.5))));
      fd_check(g, x, {loss}, all_coords(g.value(x)), st, "softmax/log");
    }
    {  // classification loss
      Graph g;
      NodeId logits = g.param(LeafRole::Theta, "z", rnd_tensor({4, 5}, rng, -2, 2));
      Tensor onehot = Tensor::zeros({4, 5});
      std::uniform_int_distribution<int> pick(0, 4);
      for (int r = 0; r < 4; ++r) onehot.data()[r * 5 + pick(rng)] = 1;
      NodeId loss = g.cross_entropy_softmax(logits, g.constant(onehot));
      fd_check(g, logits, {loss}, all_coords(g.value(logits)), st, "cross_entropy");
    }
    {  // gather
      Graph g;
      NodeId x = g.param(LeafRole::Theta, "x", rnd_tensor({10}, rng, -1, 1));
      NodeId y = g.gather(x, {1, 4, 7});
      NodeId loss = g.sum(g.mul(y, g.constant(rnd_tensor({3}, rng, 0.5, 1.5))));
      fd_check(g, x, {loss}, all_coords(g.value(x)), st, "gather");
    }
  }
}

// Loss terms as wired into a real (tiny) search network: classification term,
// operation entropy, grouped edge loss, and the schedule-weighted total.
void check_loss_terms(std::mt19937_64& rng, FdStats& st) {
  constexpr int kInstances = 20;
  for (int inst = 0; inst < kInstances; ++inst) {
    NetworkSpec spec;
    spec.cells = 1;
    spec.channels = 2;
    spec.num_nodes = 4;
    spec.classes = 3;
    spec.image_hw = 8;
    spec.batch = 2;
    const CellTopology topo = CellTopology::make(spec.num_nodes);
    ArchParams init = init_arch_params(topo, false, 1000 + static_cast<std::uint64_t>(inst));
    SuperNetwork net = build_search_network(spec, init, 2000 + static_cast<std::uint64_t>(inst));
    const std::vector<EdgeGroup> groups = group_preset("balanced-8", topo);
    RegularizerNodes reg = wire_losses(net, groups);
    set_loss_weights(net.graph, reg, real(0.7), real(1.1), real(1.7));

    Dataset ds = synth_generate(spec.classes, 8, spec.image_hw, spec.image_hw, 3000 + static_cast<std::uint64_t>(inst));
    const Normalizer norm = compute_normalizer(ds);
    Batch b = gather_batch(ds, {0, 1, 2, 3, 4, 5, 6, 7}, static_cast<std::size_t>(inst % 4),
                           static_cast<std::size_t>(inst % 4) + 2, spec.batch, norm);
    net.graph.bind("x", b.x);
    net.graph.bind("y", b.y);

    // Architecture logits away from the uniform init: betas bounded away from
    // the cardinality kink at zero, alphas spread enough to matter.
    Graph& g = net.graph;
    {
      Tensor& av = g.leaf_value(net.alpha_leaf[kNormal]);
      std::uniform_real_distribution<double> ad(-1.2, 1.2);
      for (std::size_t i = 0; i < av.size(); ++i) av.data()[i] = real(ad(rng));
      Tensor& bv = g.leaf_value(net.beta_leaf[kNormal]);
      std::uniform_real_distribution<double> bd(0.05, 0.9);
      std::bernoulli_distribution flip(0.5);
      for (std::size_t i = 0; i < bv.size(); ++i) bv.data()[i] = real(flip(rng) ? -bd(rng) : bd(rng));
    }

    const std::vector<NodeId> losses{net.class_loss, reg.op_entropy, reg.edge_loss, reg.total};
    fd_check(g, net.beta_leaf[kNormal], losses, all_coords(g.value(net.beta_leaf[kNormal])), st, "loss/beta");
    fd_check(g, net.alpha_leaf[kNormal], losses, {0, 6, 13, 20, 27, 34}, st, "loss/alpha");
    // a handful of network-weight coordinates
    const std::vector<NodeId> leaves = g.leaves(LeafRole::Theta);
    std::uniform_int_distribution<std::size_t> pickLeaf(0, leaves.size() - 1);
    for (int k = 0; k < 5; ++k) {
      NodeId leaf = leaves[pickLeaf(rng)];
      std::uniform_int_distribution<int> pickCoord(0, static_cast<int>(g.value(leaf).size()) - 1);
      fd_check(g, leaf, losses, {pickCoord(rng)}, st, "loss/theta");
    }
  }
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0xacce97a0ce);
  FdStats st;
  check_primitives(rng, st);
  check_loss_terms(rng, st);
  const double secs = seconds_since(t0);
  const bool pass = st.max_rel <= kFdRtol && secs < 120.0;
  char buf[256];
  std::snprintf(buf, sizeof buf, "max rel err %.3g over %ld checks (worst: %s), tol %.0e, %.1fs (limit 120s)",
                st.max_rel, st.checks, st.worst.c_str(), kFdRtol, secs);
  report(1, "gradient correctness", pass, buf);
}

// ---------------------------------------------------------------------------
// 2 + 3. one toy search serves both selection checks: operation entropy must
// concentrate softmax(alpha), and the grouped edge loss must push exactly k
// betas per group to the ceiling.

json toy_search_config(int classes, int count, int channels, std::uint64_t seed, double arch_lr, int batch,
                       const char* lambda_c_control, double lambda_c_scale,
                       const char* groups_preset = "balanced-8", int cells = 1) {
  json cfg = {
      {"schema_version", 1},
      {"task",
       {{"kind", "synthetic"}, {"classes", classes}, {"count", count}, {"eval_count", 64}, {"image_hw", 16}}},
      {"network", {{"cells", cells}, {"channels", channels}}},
      {"search", {{"epochs", 30}, {"batch", batch}, {"arch_lr", arch_lr}}},
      {"regularizers",
       {{"lambda_c", {{"control", lambda_c_control}, {"scale", lambda_c_scale}}},
        {"lambda_alpha", {{"control", "const"}}},
        {"lambda_beta", {{"control", "const"}}}}},
      {"groups", {{"preset", groups_preset}}},
      {"seed", seed}};
  return cfg;
}

void criterion_selection_drives() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr double kMass = 0.9;      // per-edge / per-group softmax mass floor
  constexpr double kNearOne = 0.1;   // |beta - 1| window that counts as kept
  const std::string cfgPath = write_config(toy_search_config(4, 1024, 4, 2, 0.003, 8, "linear", 1.0), "toy.json");
  SearchArtifacts art = run_search_command(cfgPath, (g_root / "toy").string());
  const double secs = seconds_since(t0);
  const json summary = json::parse(art.summary_json);

  const auto& amax = summary.at("alpha_max").at("normal");
  int concentrated = 0;
  for (const auto& v : amax)
    if (v.get<double>() >= kMass) ++concentrated;
  const int needed = static_cast<int>(std::ceil(0.9 * static_cast<double>(amax.size())));
  const bool pass2 = concentrated >= needed && secs < 900.0;
  char buf[192];
  std::snprintf(buf, sizeof buf, "max softmax(alpha) >= %.1f on %d/%zu edges (need %d), %.0fs (limit 900s)", kMass,
                concentrated, amax.size(), needed, secs);
  report(2, "operation entropy drive", pass2, buf);

  // top-2 group mass from the summary, raw beta positions from the checkpoint
  bool massOk = true;
  double worstMass = 1.0;
  for (const auto& v : summary.at("beta_mass").at("normal")) {
    worstMass = std::min(worstMass, v.get<double>());
    if (v.get<double>() < kMass) massOk = false;
  }
  const Checkpoint ck = load_checkpoint(art.checkpoint_path);
  const CellTopology topo = CellTopology::make(ck.spec.num_nodes);
  bool countsOk = true;
  std::string counts;
  for (const EdgeGroup& grp : ck.groups) {
    int near = 0;
    for (int e : grp.edges)
      if (std::abs(ck.arch.beta[kNormal].data()[e] - real(1)) <= kNearOne) ++near;
    counts += (counts.empty() ? "" : ",") + std::to_string(near) + "/" + std::to_string(grp.k);
    if (near != grp.k) countsOk = false;
  }
  char buf3[192];
  std::snprintf(buf3, sizeof buf3, "min top-2 mass %.3f (floor %.1f); betas within %.1f of 1.0 per group: %s",
                worstMass, kMass, kNearOne, counts.c_str());
  report(3, "edge cardinality drive", massOk && countsOk, buf3);
}

// ---------------------------------------------------------------------------
// 4. paired runs: with the regularizer block disabled the one-hot probe must
// lose much more accuracy than with it enabled.

struct GapPair {
  double base_drop = 0;
  double full_drop = 0;
  std::string base_checkpoint, full_checkpoint;
};

// Two cells deepen the one-hot distortion of an unregularized checkpoint;
// single-k groups let a captured winner carry ~all the softmax mass, so the
// regularized probe is a near no-op.
GapPair gap_pair(std::uint64_t seed) {
  GapPair out;
  const std::string tag = "gap_seed" + std::to_string(seed);
  const std::string basePath =
      write_config(toy_search_config(8, 256, 4, seed, 0.05, 16, "const", 0.0, "imbalanced-4", 2), tag + "_base.json");
  const std::string fullPath =
      write_config(toy_search_config(8, 256, 4, seed, 0.05, 16, "linear", 1.0, "imbalanced-4", 2), tag + "_full.json");
  SearchArtifacts base = run_search_command(basePath, (g_root / (tag + "_base")).string());
  SearchArtifacts full = run_search_command(fullPath, (g_root / (tag + "_full")).string());
  out.base_drop = json::parse(base.summary_json).at("gap").at("drop").get<double>();
  out.full_drop = json::parse(full.summary_json).at("gap").at("drop").get<double>();
  out.base_checkpoint = base.checkpoint_path;
  out.full_checkpoint = full.checkpoint_path;
  return out;
}

std::vector<GapPair> g_gap_pairs;  // reused by the imbalanced-preset check

void criterion_gap_reduction() {
  constexpr double kSeparation = 15.0;  // baseline drop must exceed ours by this
  constexpr double kFullCeil = 5.0;     // our drop must stay under this
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    GapPair p = gap_pair(seed);
    const bool ok = (p.base_drop - p.full_drop >= kSeparation) && (p.full_drop <= kFullCeil);
    wins += ok;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%sseed %llu: base %.1f vs full %.1f%s", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), p.base_drop, p.full_drop, ok ? "" : " (x)");
    detail += buf;
    g_gap_pairs.push_back(std::move(p));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " -> %d/3 seeds (need 2; sep >= %.0f, ceil %.0f)", wins, kSeparation, kFullCeil);
  report(4, "discretization gap reduction", wins >= 2, detail + buf);
}

// ---------------------------------------------------------------------------
// 5. imbalanced presets: exact kept-edge counts, and retrained accuracy from
// the regularized checkpoints at least matching the unregularized ones.

json retrain_config(std::uint64_t seed) {
  json cfg = toy_search_config(8, 256, 4, seed, 0.05, 16, "linear", 1.0, "imbalanced-4", 2);
  cfg["retrain"] = {{"epochs", 10}};
  return cfg;
}

void criterion_imbalanced() {
  const int presets[] = {3, 4, 5, 6};
  bool countsOk = true;
  std::string countDetail;
  const Checkpoint ck = load_checkpoint(g_gap_pairs.front().full_checkpoint);
  const CellTopology topo = CellTopology::make(ck.spec.num_nodes);
  for (int n : presets) {
    const std::string name = "imbalanced-" + std::to_string(n);
    Genotype geno = derive_genotype(ck.arch, topo, group_preset(name, topo));
    const int kept = static_cast<int>(geno.kept[kNormal].size());
    countDetail += (countDetail.empty() ? "" : ",") + std::to_string(kept);
    if (kept != n) countsOk = false;
  }

  // head-to-head retrains from the paired checkpoints of the gap check
  double fullSum = 0, baseSum = 0;
  int runs = 0;
  for (std::size_t i = 0; i < g_gap_pairs.size(); ++i) {
    const std::uint64_t seed = i + 1;
    const std::string cfgPath = write_config(retrain_config(seed), "retrain_seed" + std::to_string(seed) + ".json");
    for (const bool full : {true, false}) {
      const Checkpoint source =
          load_checkpoint(full ? g_gap_pairs[i].full_checkpoint : g_gap_pairs[i].base_checkpoint);
      const Genotype geno = derive_genotype(source.arch, topo, group_preset("imbalanced-4", topo));
      const fs::path genoPath =
          g_root / ("geno_s" + std::to_string(seed) + (full ? "_full.json" : "_base.json"));
      {
        std::ofstream out(genoPath);
        out << genotype_to_json(geno);
      }
      RetrainArtifacts art = run_retrain_command(genoPath.string(), cfgPath,
                                                 (g_root / ("retrain_s" + std::to_string(seed) +
                                                            (full ? "_full" : "_base"))).string());
      const double acc = json::parse(art.report_json).at("eval_accuracy").get<double>();
      (full ? fullSum : baseSum) += acc;
    }
    ++runs;
  }
  const double fullAvg = fullSum / runs, baseAvg = baseSum / runs;
  const bool retrainOk = fullAvg >= baseAvg;
  char buf[224];
  std::snprintf(buf, sizeof buf,
                "kept counts %s (want 3,4,5,6); retrained accuracy avg over %d seeds: regularized %.1f vs "
                "unregularized %.1f",
                countDetail.c_str(), runs, fullAvg, baseAvg);
  report(5, "imbalanced presets", countsOk && retrainOk, buf);
}

// ---------------------------------------------------------------------------
// 6. schedule semantics against a closed-form oracle on a 50-epoch grid.

double schedule_oracle(ScheduleKind kind, int activation, double k, double t0, int epoch, int total) {
  if (epoch < activation) return 0.0;
  const double t = static_cast<double>(epoch - activation) / static_cast<double>(total - 1 - activation);
  switch (kind) {
    case ScheduleKind::Const: return 1.0;
    case ScheduleKind::Linear: return t;
    case ScheduleKind::Exp: return (std::exp(k * t) - 1.0) / (std::exp(k) - 1.0);
    case ScheduleKind::Log: return std::log(1.0 + k * t) / std::log(1.0 + k);
    case ScheduleKind::Step: return t >= t0 ? 1.0 : 0.0;
  }
  return 0.0;
}

void criterion_schedules() {
  constexpr double kTol = 1e-12;
  constexpr int kTotal = 50;
  const ScheduleKind kinds[] = {ScheduleKind::Const, ScheduleKind::Linear, ScheduleKind::Exp, ScheduleKind::Log,
                                ScheduleKind::Step};
  double maxErr = 0;
  bool propsOk = true;
  std::string firstBad;
  for (ScheduleKind kind : kinds) {
    for (int activation : {0, 7}) {
      ScheduleSpec spec;
      spec.kind = kind;
      spec.activation_epoch = activation;
      double prev = -1;
      for (int epoch = 0; epoch < kTotal; ++epoch) {
        const double v = schedule_value(spec, epoch, kTotal);
        const double want = schedule_oracle(kind, activation, spec.k, spec.t0, epoch, kTotal);
        maxErr = std::max(maxErr, std::abs(v - want));
        const bool bad = std::abs(v - want) > kTol          // oracle match
                         || v < -kTol || v > 1.0 + kTol     // bound
                         || v < prev - kTol                 // monotone
                         || (epoch < activation && v != 0)  // activation zero
                         || (epoch == kTotal - 1 && std::abs(v - 1.0) > kTol);  // endpoint
        if (bad && propsOk) {
          propsOk = false;
          firstBad = std::string(schedule_kind_name(kind)) + " act " + std::to_string(activation) + " epoch " +
                     std::to_string(epoch);
        }
        prev = v;
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |value - oracle| %.3g over %d points, tol %.0e%s%s", maxErr, 5 * 2 * kTotal,
                kTol, propsOk ? "" : "; first violation: ", firstBad.c_str());
  report(6, "schedule semantics", propsOk, buf);
}

// ---------------------------------------------------------------------------
// 7. optimizer kernels against hand-rolled scalar recurrences.

void criterion_optimizers() {
  constexpr double kTol = 1e-12;
  const double grads[5] = {0.3, -0.2, 0.5, 0.1, -0.4};
  double maxErr = 0;

  {  // SGD with momentum and L2 term folded into the gradient
    const double lr = 0.25, mu = 0.9, wd = 3e-4;
    real p = real(1.0), v = real(0);
    double rp = 1.0, rv = 0.0;
    for (int s = 0; s < 5; ++s) {
      real gr = real(grads[s]);
      sgd_momentum_update(&p, &v, &gr, 1, real(lr), real(mu), real(wd));
      rv = mu * rv + (grads[s] + wd * rp);
      rp = rp - lr * rv;
      maxErr = std::max(maxErr, std::abs(double(p) - rp));
    }
  }
  {  // Adam with bias correction
    const double lr = 3e-4, b1 = 0.5, b2 = 0.999, wd = 1e-3, eps = 1e-8;
    real p = real(0.5), m1 = real(0), m2 = real(0);
    double rp = 0.5, rm = 0.0, rv = 0.0;
    for (int s = 1; s <= 5; ++s) {
      real gr = real(grads[s - 1]);
      adam_update(&p, &m1, &m2, &gr, 1, s, real(lr), real(b1), real(b2), real(wd), real(eps));
      const double g = grads[s - 1] + wd * rp;
      rm = b1 * rm + (1 - b1) * g;
      rv = b2 * rv + (1 - b2) * g * g;
      const double mhat = rm / (1 - std::pow(b1, s));
      const double vhat = rv / (1 - std::pow(b2, s));
      rp = rp - lr * mhat / (std::sqrt(vhat) + eps);
      maxErr = std::max(maxErr, std::abs(double(p) - rp));
    }
  }
  const bool cosineExact = cosine_lr(0, 50, real(0.25)) == real(0.25);
  char buf[128];
  std::snprintf(buf, sizeof buf, "max trace divergence %.3g (tol %.0e), cosine lr(0) %s 0.25", maxErr, kTol,
                cosineExact ? "==" : "!=");
  report(7, "optimizer traces", maxErr <= kTol && cosineExact, buf);
}

// ---------------------------------------------------------------------------
// 8. determinism: identical config text, two separate runs, byte-identical
// derived topology and final metrics record.

void criterion_determinism() {
  json cfg = toy_search_config(4, 128, 4, 9, 0.05, 16, "linear", 1.0);
  cfg["task"]["count"] = 128;
  cfg["search"]["epochs"] = 2;
  const std::string cfgPath = write_config(cfg, "det.json");
  SearchArtifacts a = run_search_command(cfgPath, (g_root / "det_a").string());
  SearchArtifacts b = run_search_command(cfgPath, (g_root / "det_b").string());
  const bool idSame = a.run_id == b.run_id;
  const bool genoSame = read_file(a.genotype_path) == read_file(b.genotype_path);
  const bool finalSame = last_line(read_file(a.metrics_path)) == last_line(read_file(b.metrics_path));
  const bool summarySame = a.summary_json == b.summary_json;
  char buf[160];
  std::snprintf(buf, sizeof buf, "run id %s, genotype bytes %s, final metrics record %s, summary %s",
                idSame ? "equal" : "DIFFER", genoSame ? "equal" : "DIFFER", finalSame ? "equal" : "DIFFER",
                summarySame ? "equal" : "DIFFER");
  report(8, "determinism", idSame && genoSame && finalSame && summarySame, buf);
}

// ---------------------------------------------------------------------------
// 9. CIFAR-10 ingestion on byte-crafted fixtures.

void criterion_cifar() {
  const fs::path dir = g_root / "cifar";
  fs::create_directories(dir);
  const auto record = [](unsigned char label, unsigned mulc, unsigned addc) {
    std::string r(3073, '\0');
    r[0] = static_cast<char>(label);
    for (unsigned i = 0; i < 3072; ++i) r[i + 1] = static_cast<char>((i * mulc + addc) % 256);
    return r;
  };
  const std::string good = (dir / "good.bin").string();
  {
    std::ofstream out(good, std::ios::binary);
    out << record(3, 7, 13) << record(9, 11, 5);
  }
  bool roundtrip = false;
  std::string detail;
  try {
    Dataset ds = load_cifar10_binary(good);
    roundtrip = ds.count() == 2 && ds.classes == 10 && ds.labels[0] == 3 && ds.labels[1] == 9;
    for (int r = 0; r < 2 && roundtrip; ++r) {
      const unsigned mulc = r == 0 ? 7 : 11, addc = r == 0 ? 13 : 5;
      for (unsigned i = 0; i < 3072; ++i) {
        const real want = real((i * mulc + addc) % 256) / real(255);
        if (ds.images.data()[static_cast<std::size_t>(r) * 3072 + i] != want) {
          roundtrip = false;
          break;
        }
      }
    }
    detail = roundtrip ? "2-record fixture round-trips exactly" : "pixel or label mismatch";
  } catch (const Error& e) {
    detail = std::string("unexpected error: ") + e.what();
  }

  bool truncatedOk = false;
  {
    const std::string bad = (dir / "truncated.bin").string();
    std::ofstream out(bad, std::ios::binary);
    out << record(1, 3, 0) << std::string(100, 'x');  // 100 stray bytes
    out.close();
    try {
      load_cifar10_binary(bad);
    } catch (const Error& e) {
      truncatedOk = e.kind() == ErrorKind::Format && std::string(e.what()).find("offset 3073") != std::string::npos;
      if (!truncatedOk) detail += std::string("; truncation error lacks position: ") + e.what();
    }
  }
  bool labelOk = false;
  {
    const std::string bad = (dir / "badlabel.bin").string();
    std::ofstream out(bad, std::ios::binary);
    out << record(1, 3, 0) << record(11, 3, 0);
    out.close();
    try {
      load_cifar10_binary(bad);
    } catch (const Error& e) {
      labelOk = e.kind() == ErrorKind::Format && std::string(e.what()).find("3073") != std::string::npos;
      if (!labelOk) detail += std::string("; label error lacks position: ") + e.what();
    }
  }
  if (truncatedOk && labelOk) detail += "; malformed files rejected with byte offsets";
  report(9, "cifar ingestion", roundtrip && truncatedOk && labelOk, detail);
}

}  // namespace

int main() {
  g_root = fs::current_path() / "acceptance_runs";
  fs::remove_all(g_root);
  fs::create_directories(g_root);

  criterion_gradients();
  criterion_selection_drives();
  criterion_gap_reduction();
  criterion_imbalanced();
  criterion_schedules();
  criterion_optimizers();
  criterion_determinism();
  criterion_cifar();

  if (g_failures == 0)
    std::printf("acceptance: all 9 checks passed\n");
  else
    std::printf("acceptance: %d check(s) FAILED\n", g_failures);
  return g_failures;
}
