#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"

namespace entnas {

// Closed primitive catalog. Every forward kernel has a matching backward
// kernel, so gradient coverage is total by construction.
enum class Prim : std::uint8_t {
  Input,
  Param,
  Constant,
  Add,           // n-ary elementwise sum; 2-ary (B,K)+(K) broadcasts as row bias
  Mul,           // elementwise product
  ScalarScale,   // a*x + b, or x * coeffs[index] when a coefficient node is given
  MatMul,        // (B,F) x (F,K)
  Conv2d,        // same-padding, stride 1/2, configurable dilation, no bias
  DepthwiseConv2d,
  Relu,
  MaxPool,       // 3x3 window, same padding
  AvgPool,       // 1x1 or 3x3 window, same padding, valid-count divisor
  GlobalAvgPool, // (B,C,H,W) -> (B,C)
  ConcatChannels,
  BatchNorm,     // batch statistics, no affine; running stats for eval mode
  Softmax,       // over a designated axis, max-subtracted
  Log,           // optional lower clamp before log
  Sum,           // all elements -> scalar
  Square,
  Abs,
  CrossEntropySoftmax,  // fused mean NLL of softmax(logits) against one-hot targets
  Gather,        // 1-D index selection
};

const char* prim_name(Prim p);

enum class LeafRole : std::uint8_t { None, Theta, Alpha, Beta };

using NodeId = int;

struct Node {
  Prim prim = Prim::Input;
  std::vector<NodeId> inputs;
  Tensor out;
  Tensor grad;

  // static attributes
  int stride = 1;
  int dilation = 1;
  int axis = -1;
  int window = 3;
  int index = -1;                // ScalarScale: component of the coefficient node
  real scale_a = 1, scale_b = 0; // ScalarScale constants
  real log_floor = 0;
  std::vector<int> gather;

  // leaf identity
  LeafRole role = LeafRole::None;
  std::string name;

  // saved forward context
  Tensor saved;   // BatchNorm: per-channel inv std; CrossEntropySoftmax: probs
  Tensor saved2;  // BatchNorm: per-channel batch mean
  std::vector<int> argmax;  // MaxPool: flat input index per output element

  // BatchNorm persistent buffers
  Tensor running_mean, running_var;
};

// Recorded computation tape over statically-shaped tensors. The graph is
// built once, then evaluated and differentiated many times; node outputs
// and gradients are allocated at construction. Single-threaded per
// instance; independent instances are safe on distinct threads.
class Graph {
 public:
  // ---- construction ----
  NodeId input(const std::string& name, std::vector<int> shape);
  NodeId param(LeafRole role, const std::string& name, Tensor init);
  NodeId constant(Tensor value);

  NodeId add(std::vector<NodeId> terms);
  NodeId mul(NodeId a, NodeId b);
  NodeId scalar_scale(NodeId x, real a, real b = 0);
  NodeId scale_by(NodeId x, NodeId coeffs, int index);  // y = coeffs[index] * x
  NodeId matmul(NodeId a, NodeId b);
  NodeId conv2d(NodeId x, NodeId w, int stride, int dilation = 1);
  NodeId depthwise_conv2d(NodeId x, NodeId w, int stride, int dilation = 1);
  NodeId relu(NodeId x);
  NodeId max_pool3(NodeId x, int stride);
  NodeId avg_pool(NodeId x, int window, int stride);
  NodeId global_avg_pool(NodeId x);
  NodeId concat_channels(std::vector<NodeId> xs);
  NodeId batch_norm(NodeId x, const std::string& name);
  NodeId softmax(NodeId x, int axis);
  NodeId log(NodeId x, real floor = 0);
  NodeId sum(NodeId x);
  NodeId square(NodeId x);
  NodeId abs(NodeId x);
  NodeId cross_entropy_softmax(NodeId logits, NodeId onehot_targets);
  NodeId gather(NodeId x, std::vector<int> idx);

  void mark_output(const std::string& name, NodeId id);

  // ---- execution ----
  void bind(const std::string& input_name, const Tensor& value);
  void evaluate();
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].out; }
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }
  Tensor& leaf_value(NodeId id);

  // batch-norm behaviour
  void set_train(bool train) { train_ = train; }
  bool train_mode() const { return train_; }
  void set_update_batch_stats(bool update) { update_stats_ = update; }
  bool update_batch_stats() const { return update_stats_; }

  void set_scale(NodeId id, real a, real b = 0);

  // ---- introspection ----
  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  const std::vector<NodeId>& leaves(LeafRole role) const;
  const std::vector<NodeId>& batch_norm_nodes() const { return bn_nodes_; }
  NodeId find_leaf(const std::string& name) const;  // -1 when absent
  NodeId output(const std::string& name) const;
  std::size_t param_count(LeafRole role) const;

  // name -> tensor view of all trainable leaves (params) and batch-norm
  // running statistics (buffers); used by checkpointing and graph-to-graph
  // parameter transfer.
  std::map<std::string, Tensor> export_params() const;
  std::map<std::string, Tensor> export_buffers() const;
  void import_params(const std::map<std::string, Tensor>& params, bool require_all = true);
  void import_buffers(const std::map<std::string, Tensor>& buffers, bool require_all = true);

 private:
  NodeId push(Node node);
  void check_rank(NodeId id, int rank, const char* what) const;
  std::vector<int> infer_conv_shape(const Node& n) const;
  void forward_node(Node& n);
  void backward_node(Node& n, std::vector<char>& touched);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> inputs_;
  std::set<NodeId> unbound_;
  std::map<std::string, NodeId> leaf_names_;
  std::map<std::string, NodeId> outputs_;
  std::vector<NodeId> theta_, alpha_, beta_;
  std::vector<NodeId> bn_nodes_;
  bool train_ = true;
  bool update_stats_ = true;
};

// Spec-level conveniences.
std::map<std::string, Tensor> evaluate(Graph& g, const std::map<std::string, Tensor>& inputs,
                                       const std::vector<std::string>& outputs);
std::map<std::string, Tensor> gradients(Graph& g, NodeId loss);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
real finite_difference_check(const std::function<real(const Tensor&)>& f, const Tensor& point,
                             const Tensor& analytic, real epsilon);
// Convenience: differentiate `loss` w.r.t. one leaf of `g` and compare.
real finite_difference_check(Graph& g, NodeId leaf, NodeId loss, real epsilon);

}  // namespace entnas
