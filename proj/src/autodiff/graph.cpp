#include "autodiff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace entnas {

namespace {

constexpr real kBnEps = real(1e-5);
constexpr real kBnMomentum = real(0.1);

int ceil_div_pos(int a, int b) { return a > 0 ? (a + b - 1) / b : 0; }

std::string node_desc(const Node& n, NodeId id) {
  std::ostringstream os;
  os << prim_name(n.prim) << "#" << id;
  if (!n.name.empty()) os << " (" << n.name << ")";
  return os.str();
}

}  // namespace

const char* prim_name(Prim p) {
  switch (p) {
    case Prim::Input: return "input";
    case Prim::Param: return "param";
    case Prim::Constant: return "constant";
    case Prim::Add: return "add";
    case Prim::Mul: return "multiply";
    case Prim::ScalarScale: return "scalar-scale";
    case Prim::MatMul: return "matmul";
    case Prim::Conv2d: return "conv2d";
    case Prim::DepthwiseConv2d: return "depthwise-conv2d";
    case Prim::Relu: return "relu";
    case Prim::MaxPool: return "max-pool";
    case Prim::AvgPool: return "avg-pool";
    case Prim::GlobalAvgPool: return "global-avg-pool";
    case Prim::ConcatChannels: return "concat-channels";
    case Prim::BatchNorm: return "batch-norm";
    case Prim::Softmax: return "softmax";
    case Prim::Log: return "log";
    case Prim::Sum: return "sum";
    case Prim::Square: return "square";
    case Prim::Abs: return "abs";
    case Prim::CrossEntropySoftmax: return "cross-entropy-softmax";
    case Prim::Gather: return "gather";
  }
  return "?";
}

NodeId Graph::push(Node node) {
  node.grad = Tensor(node.out.shape());
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_rank(NodeId id, int rank, const char* what) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.out.rank() != rank)
    fail(ErrorKind::Contract, std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                  n.out.shape_str() + " from " + node_desc(n, id));
}

NodeId Graph::input(const std::string& name, std::vector<int> shape) {
  if (inputs_.count(name)) fail(ErrorKind::Contract, "duplicate input name: " + name);
  Node n;
  n.prim = Prim::Input;
  n.name = name;
  n.out = Tensor(std::move(shape));
  NodeId id = push(std::move(n));
  inputs_[name] = id;
  unbound_.insert(id);
  return id;
}

NodeId Graph::param(LeafRole role, const std::string& name, Tensor init) {
  if (role == LeafRole::None) fail(ErrorKind::Contract, "param requires a role tag");
  if (leaf_names_.count(name)) fail(ErrorKind::Contract, "duplicate leaf name: " + name);
  Node n;
  n.prim = Prim::Param;
  n.role = role;
  n.name = name;
  n.out = std::move(init);
  NodeId id = push(std::move(n));
  leaf_names_[name] = id;
  switch (role) {
    case LeafRole::Theta: theta_.push_back(id); break;
    case LeafRole::Alpha: alpha_.push_back(id); break;
    case LeafRole::Beta: beta_.push_back(id); break;
    default: break;
  }
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.prim = Prim::Constant;
  n.out = std::move(value);
  return push(std::move(n));
}

NodeId Graph::add(std::vector<NodeId> terms) {
  if (terms.empty()) fail(ErrorKind::Contract, "add: no inputs");
  const Tensor& first = nodes_[static_cast<size_t>(terms[0])].out;
  bool row_bias = false;
  if (terms.size() == 2) {
    const Tensor& second = nodes_[static_cast<size_t>(terms[1])].out;
    if (first.rank() == 2 && second.rank() == 1 && second.extent(0) == first.extent(1)) row_bias = true;
  }
  if (!row_bias) {
    for (NodeId t : terms) {
      const Tensor& other = nodes_[static_cast<size_t>(t)].out;
      if (!first.same_shape(other))
        fail(ErrorKind::Contract, "add: shape mismatch " + first.shape_str() + " vs " + other.shape_str());
    }
  }
  Node n;
  n.prim = Prim::Add;
  n.inputs = std::move(terms);
  n.out = Tensor(first.shape());
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[static_cast<size_t>(a)].out;
  const Tensor& tb = nodes_[static_cast<size_t>(b)].out;
  if (!ta.same_shape(tb))
    fail(ErrorKind::Contract, "multiply: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.prim = Prim::Mul;
  n.inputs = {a, b};
  n.out = Tensor(ta.shape());
  return push(std::move(n));
}

NodeId Graph::scalar_scale(NodeId x, real a, real b) {
  Node n;
  n.prim = Prim::ScalarScale;
  n.inputs = {x};
  n.scale_a = a;
  n.scale_b = b;
  n.out = Tensor(nodes_[static_cast<size_t>(x)].out.shape());
  return push(std::move(n));
}

NodeId Graph::scale_by(NodeId x, NodeId coeffs, int index) {
  const Tensor& c = nodes_[static_cast<size_t>(coeffs)].out;
  if (index < 0 || static_cast<std::size_t>(index) >= c.size())
    fail(ErrorKind::Contract, "scalar-scale: coefficient index " + std::to_string(index) + " out of range for " +
                                  c.shape_str());
  Node n;
  n.prim = Prim::ScalarScale;
  n.inputs = {x, coeffs};
  n.index = index;
  n.out = Tensor(nodes_[static_cast<size_t>(x)].out.shape());
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_rank(a, 2, "matmul lhs");
  check_rank(b, 2, "matmul rhs");
  const Tensor& ta = nodes_[static_cast<size_t>(a)].out;
  const Tensor& tb = nodes_[static_cast<size_t>(b)].out;
  if (ta.extent(1) != tb.extent(0))
    fail(ErrorKind::Contract, "matmul: inner extent mismatch " + ta.shape_str() + " x " + tb.shape_str());
  Node n;
  n.prim = Prim::MatMul;
  n.inputs = {a, b};
  n.out = Tensor({ta.extent(0), tb.extent(1)});
  return push(std::move(n));
}

std::vector<int> Graph::infer_conv_shape(const Node& n) const {
  const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
  const Tensor& w = nodes_[static_cast<size_t>(n.inputs[1])].out;
  const bool depthwise = n.prim == Prim::DepthwiseConv2d;
  if (x.rank() != 4) fail(ErrorKind::Contract, std::string(prim_name(n.prim)) + ": input must be rank 4, got " + x.shape_str());
  const int k = depthwise ? w.extent(1) : w.extent(2);
  if (depthwise) {
    if (w.rank() != 3 || w.extent(1) != w.extent(2))
      fail(ErrorKind::Contract, "depthwise-conv2d: kernel must be (C,k,k), got " + w.shape_str());
    if (w.extent(0) != x.extent(1))
      fail(ErrorKind::Contract, "depthwise-conv2d: channel mismatch " + x.shape_str() + " vs " + w.shape_str());
  } else {
    if (w.rank() != 4 || w.extent(2) != w.extent(3))
      fail(ErrorKind::Contract, "conv2d: kernel must be (Co,Ci,k,k), got " + w.shape_str());
    if (w.extent(1) != x.extent(1))
      fail(ErrorKind::Contract, "conv2d: input channels " + x.shape_str() + " do not match kernel " + w.shape_str());
  }
  if (k % 2 == 0) fail(ErrorKind::Contract, std::string(prim_name(n.prim)) + ": kernel extent must be odd");
  if (n.stride != 1 && n.stride != 2) fail(ErrorKind::Contract, "conv stride must be 1 or 2");
  if (x.extent(2) % n.stride || x.extent(3) % n.stride)
    fail(ErrorKind::Contract, std::string(prim_name(n.prim)) + ": spatial extent " + x.shape_str() +
                                  " not divisible by stride " + std::to_string(n.stride));
  const int co = depthwise ? x.extent(1) : w.extent(0);
  return {x.extent(0), co, x.extent(2) / n.stride, x.extent(3) / n.stride};
}

NodeId Graph::conv2d(NodeId x, NodeId w, int stride, int dilation) {
  Node n;
  n.prim = Prim::Conv2d;
  n.inputs = {x, w};
  n.stride = stride;
  n.dilation = dilation;
  n.out = Tensor(infer_conv_shape(n));
  return push(std::move(n));
}

NodeId Graph::depthwise_conv2d(NodeId x, NodeId w, int stride, int dilation) {
  Node n;
  n.prim = Prim::DepthwiseConv2d;
  n.inputs = {x, w};
  n.stride = stride;
  n.dilation = dilation;
  n.out = Tensor(infer_conv_shape(n));
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n;
  n.prim = Prim::Relu;
  n.inputs = {x};
  n.out = Tensor(nodes_[static_cast<size_t>(x)].out.shape());
  return push(std::move(n));
}

NodeId Graph::max_pool3(NodeId x, int stride) {
  check_rank(x, 4, "max-pool");
  const Tensor& t = nodes_[static_cast<size_t>(x)].out;
  if (t.extent(2) % stride || t.extent(3) % stride)
    fail(ErrorKind::Contract, "max-pool: spatial extent " + t.shape_str() + " not divisible by stride");
  Node n;
  n.prim = Prim::MaxPool;
  n.inputs = {x};
  n.stride = stride;
  n.window = 3;
  n.out = Tensor({t.extent(0), t.extent(1), t.extent(2) / stride, t.extent(3) / stride});
  n.argmax.resize(n.out.size());
  return push(std::move(n));
}

NodeId Graph::avg_pool(NodeId x, int window, int stride) {
  check_rank(x, 4, "avg-pool");
  if (window != 1 && window != 3) fail(ErrorKind::Contract, "avg-pool window must be 1 or 3");
  const Tensor& t = nodes_[static_cast<size_t>(x)].out;
  if (t.extent(2) % stride || t.extent(3) % stride)
    fail(ErrorKind::Contract, "avg-pool: spatial extent " + t.shape_str() + " not divisible by stride");
  Node n;
  n.prim = Prim::AvgPool;
  n.inputs = {x};
  n.stride = stride;
  n.window = window;
  n.out = Tensor({t.extent(0), t.extent(1), t.extent(2) / stride, t.extent(3) / stride});
  return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId x) {
  check_rank(x, 4, "global-avg-pool");
  const Tensor& t = nodes_[static_cast<size_t>(x)].out;
  Node n;
  n.prim = Prim::GlobalAvgPool;
  n.inputs = {x};
  n.out = Tensor({t.extent(0), t.extent(1)});
  return push(std::move(n));
}

NodeId Graph::concat_channels(std::vector<NodeId> xs) {
  if (xs.empty()) fail(ErrorKind::Contract, "concat-channels: no inputs");
  const Tensor& first = nodes_[static_cast<size_t>(xs[0])].out;
  check_rank(xs[0], 4, "concat-channels");
  int channels = 0;
  for (NodeId id : xs) {
    check_rank(id, 4, "concat-channels");
    const Tensor& t = nodes_[static_cast<size_t>(id)].out;
    if (t.extent(0) != first.extent(0) || t.extent(2) != first.extent(2) || t.extent(3) != first.extent(3))
      fail(ErrorKind::Contract, "concat-channels: incompatible shapes " + first.shape_str() + " vs " + t.shape_str());
    channels += t.extent(1);
  }
  Node n;
  n.prim = Prim::ConcatChannels;
  n.inputs = std::move(xs);
  n.out = Tensor({first.extent(0), channels, first.extent(2), first.extent(3)});
  return push(std::move(n));
}

NodeId Graph::batch_norm(NodeId x, const std::string& name) {
  check_rank(x, 4, "batch-norm");
  const Tensor& t = nodes_[static_cast<size_t>(x)].out;
  const int c = t.extent(1);
  Node n;
  n.prim = Prim::BatchNorm;
  n.inputs = {x};
  n.name = name;
  n.out = Tensor(t.shape());
  n.saved = Tensor({c});
  n.saved2 = Tensor({c});
  n.running_mean = Tensor({c});
  n.running_var = Tensor::full({c}, 1);
  NodeId id = push(std::move(n));
  bn_nodes_.push_back(id);
  return id;
}

NodeId Graph::softmax(NodeId x, int axis) {
  const Tensor& t = nodes_[static_cast<size_t>(x)].out;
  if (axis < 0 || axis >= t.rank())
    fail(ErrorKind::Contract, "softmax: axis " + std::to_string(axis) + " out of range for " + t.shape_str());
  Node n;
  n.prim = Prim::Softmax;
  n.inputs = {x};
  n.axis = axis;
  n.out = Tensor(t.shape());
  return push(std::move(n));
}

NodeId Graph::log(NodeId x, real floor) {
  Node n;
  n.prim = Prim::Log;
  n.inputs = {x};
  n.log_floor = floor;
  n.out = Tensor(nodes_[static_cast<size_t>(x)].out.shape());
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  Node n;
  n.prim = Prim::Sum;
  n.inputs = {x};
  n.out = Tensor({1});
  return push(std::move(n));
}

NodeId Graph::square(NodeId x) {
  Node n;
  n.prim = Prim::Square;
  n.inputs = {x};
  n.out = Tensor(nodes_[static_cast<size_t>(x)].out.shape());
  return push(std::move(n));
}

NodeId Graph::abs(NodeId x) {
  Node n;
  n.prim = Prim::Abs;
  n.inputs = {x};
  n.out = Tensor(nodes_[static_cast<size_t>(x)].out.shape());
  return push(std::move(n));
}

NodeId Graph::cross_entropy_softmax(NodeId logits, NodeId onehot_targets) {
  check_rank(logits, 2, "cross-entropy-softmax logits");
  check_rank(onehot_targets, 2, "cross-entropy-softmax targets");
  const Tensor& l = nodes_[static_cast<size_t>(logits)].out;
  const Tensor& y = nodes_[static_cast<size_t>(onehot_targets)].out;
  if (!l.same_shape(y))
    fail(ErrorKind::Contract, "cross-entropy-softmax: logits " + l.shape_str() + " vs targets " + y.shape_str());
  Node n;
  n.prim = Prim::CrossEntropySoftmax;
  n.inputs = {logits, onehot_targets};
  n.out = Tensor({1});
  n.saved = Tensor(l.shape());
  return push(std::move(n));
}

NodeId Graph::gather(NodeId x, std::vector<int> idx) {
  check_rank(x, 1, "gather");
  const Tensor& t = nodes_[static_cast<size_t>(x)].out;
  if (idx.empty()) fail(ErrorKind::Contract, "gather: empty index list");
  for (int i : idx)
    if (i < 0 || i >= t.extent(0))
      fail(ErrorKind::Contract, "gather: index " + std::to_string(i) + " out of range for " + t.shape_str());
  Node n;
  n.prim = Prim::Gather;
  n.inputs = {x};
  n.out = Tensor({static_cast<int>(idx.size())});
  n.gather = std::move(idx);
  return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeId id) { outputs_[name] = id; }

void Graph::bind(const std::string& input_name, const Tensor& value) {
  auto it = inputs_.find(input_name);
  if (it == inputs_.end()) fail(ErrorKind::Contract, "bind: unknown input '" + input_name + "'");
  Node& n = nodes_[static_cast<size_t>(it->second)];
  if (!n.out.same_shape(value))
    fail(ErrorKind::Contract, "bind '" + input_name + "': expected shape " + n.out.shape_str() + ", got " +
                                  value.shape_str());
  n.out = value;
  unbound_.erase(it->second);
}

Tensor& Graph::leaf_value(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.prim != Prim::Param) fail(ErrorKind::Contract, "leaf_value: node is not a trainable leaf");
  return n.out;
}

void Graph::set_scale(NodeId id, real a, real b) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.prim != Prim::ScalarScale || n.inputs.size() != 1)
    fail(ErrorKind::Contract, "set_scale: node is not a constant scalar-scale");
  n.scale_a = a;
  n.scale_b = b;
}

const std::vector<NodeId>& Graph::leaves(LeafRole role) const {
  switch (role) {
    case LeafRole::Theta: return theta_;
    case LeafRole::Alpha: return alpha_;
    case LeafRole::Beta: return beta_;
    default: fail(ErrorKind::Contract, "leaves: role must be theta/alpha/beta");
  }
}

NodeId Graph::find_leaf(const std::string& name) const {
  auto it = leaf_names_.find(name);
  return it == leaf_names_.end() ? -1 : it->second;
}

NodeId Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) fail(ErrorKind::Contract, "unknown output '" + name + "'");
  return it->second;
}

std::size_t Graph::param_count(LeafRole role) const {
  std::size_t n = 0;
  for (NodeId id : leaves(role)) n += nodes_[static_cast<size_t>(id)].out.size();
  return n;
}

std::map<std::string, Tensor> Graph::export_params() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : leaf_names_) out[name] = nodes_[static_cast<size_t>(id)].out;
  return out;
}

std::map<std::string, Tensor> Graph::export_buffers() const {
  std::map<std::string, Tensor> out;
  for (NodeId id : bn_nodes_) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    out[n.name + ".running_mean"] = n.running_mean;
    out[n.name + ".running_var"] = n.running_var;
  }
  return out;
}

void Graph::import_params(const std::map<std::string, Tensor>& params, bool require_all) {
  for (const auto& [name, id] : leaf_names_) {
    auto it = params.find(name);
    if (it == params.end()) {
      if (require_all) fail(ErrorKind::Contract, "import_params: missing entry '" + name + "'");
      continue;
    }
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.out.same_shape(it->second))
      fail(ErrorKind::Contract, "import_params '" + name + "': shape " + it->second.shape_str() + " vs expected " +
                                    n.out.shape_str());
    n.out = it->second;
  }
}

void Graph::import_buffers(const std::map<std::string, Tensor>& buffers, bool require_all) {
  for (NodeId id : bn_nodes_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    auto m = buffers.find(n.name + ".running_mean");
    auto v = buffers.find(n.name + ".running_var");
    if (m == buffers.end() || v == buffers.end()) {
      if (require_all) fail(ErrorKind::Contract, "import_buffers: missing stats for '" + n.name + "'");
      continue;
    }
    if (!n.running_mean.same_shape(m->second) || !n.running_var.same_shape(v->second))
      fail(ErrorKind::Contract, "import_buffers '" + n.name + "': shape mismatch");
    n.running_mean = m->second;
    n.running_var = v->second;
  }
}

// ---------------------------------------------------------------------------
// forward kernels
// ---------------------------------------------------------------------------

void Graph::forward_node(Node& n) {
  switch (n.prim) {
    case Prim::Input:
    case Prim::Param:
    case Prim::Constant:
      return;

    case Prim::Add: {
      Tensor& out = n.out;
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].out;
      if (n.inputs.size() == 2 && nodes_[static_cast<size_t>(n.inputs[1])].out.rank() == 1 && a.rank() == 2) {
        const Tensor& bias = nodes_[static_cast<size_t>(n.inputs[1])].out;
        const int rows = a.extent(0), cols = a.extent(1);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] = a[static_cast<size_t>(r * cols + c)] + bias[static_cast<size_t>(c)];
        return;
      }
      out = a;
      for (std::size_t t = 1; t < n.inputs.size(); ++t) {
        const real* src = nodes_[static_cast<size_t>(n.inputs[t])].out.data();
        real* dst = out.data();
        for (std::size_t i = 0; i < out.size(); ++i) dst[i] += src[i];
      }
      return;
    }

    case Prim::Mul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].out;
      for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = a[i] * b[i];
      return;
    }

    case Prim::ScalarScale: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      real a = n.scale_a, b = n.scale_b;
      if (n.inputs.size() == 2) {
        a = nodes_[static_cast<size_t>(n.inputs[1])].out[static_cast<size_t>(n.index)];
        b = 0;
      }
      for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = a * x[i] + b;
      return;
    }

    case Prim::MatMul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].out;
      const int rows = a.extent(0), inner = a.extent(1), cols = b.extent(1);
      n.out.zero();
      for (int r = 0; r < rows; ++r) {
        const real* arow = a.data() + static_cast<std::size_t>(r) * inner;
        real* orow = n.out.data() + static_cast<std::size_t>(r) * cols;
        for (int i = 0; i < inner; ++i) {
          const real av = arow[i];
          const real* brow = b.data() + static_cast<std::size_t>(i) * cols;
          for (int c = 0; c < cols; ++c) orow[c] += av * brow[c];
        }
      }
      return;
    }

    case Prim::Conv2d: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& w = nodes_[static_cast<size_t>(n.inputs[1])].out;
      const int batch = x.extent(0), ci = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int co = w.extent(0), k = w.extent(2);
      const int s = n.stride, d = n.dilation, p = ((k - 1) * d) / 2;
      const int ho = h / s, wo = wd / s;
      n.out.zero();
      for (int b = 0; b < batch; ++b)
        for (int och = 0; och < co; ++och) {
          real* obase = n.out.data() + (static_cast<std::size_t>(b) * co + och) * ho * wo;
          for (int ich = 0; ich < ci; ++ich) {
            const real* ibase = x.data() + (static_cast<std::size_t>(b) * ci + ich) * h * wd;
            const real* wbase = w.data() + (static_cast<std::size_t>(och) * ci + ich) * k * k;
            for (int kh = 0; kh < k; ++kh) {
              const int hoff = kh * d - p;
              const int ho_lo = ceil_div_pos(-hoff, s);
              const int ho_hi = std::min(ho - 1, (h - 1 - hoff) / s);
              for (int kw = 0; kw < k; ++kw) {
                const real wv = wbase[kh * k + kw];
                const int woff = kw * d - p;
                const int wo_lo = ceil_div_pos(-woff, s);
                const int wo_hi = std::min(wo - 1, (wd - 1 - woff) / s);
                for (int oh = ho_lo; oh <= ho_hi; ++oh) {
                  const real* irow = ibase + static_cast<std::size_t>(oh * s + hoff) * wd + woff;
                  real* orow = obase + static_cast<std::size_t>(oh) * wo;
                  if (s == 1) {
                    for (int ow = wo_lo; ow <= wo_hi; ++ow) orow[ow] += wv * irow[ow];
                  } else {
                    for (int ow = wo_lo; ow <= wo_hi; ++ow) orow[ow] += wv * irow[ow * s];
                  }
                }
              }
            }
          }
        }
      return;
    }

    case Prim::DepthwiseConv2d: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& w = nodes_[static_cast<size_t>(n.inputs[1])].out;
      const int batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int k = w.extent(1);
      const int s = n.stride, d = n.dilation, p = ((k - 1) * d) / 2;
      const int ho = h / s, wo = wd / s;
      n.out.zero();
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const real* ibase = x.data() + (static_cast<std::size_t>(b) * c + ch) * h * wd;
          real* obase = n.out.data() + (static_cast<std::size_t>(b) * c + ch) * ho * wo;
          const real* wbase = w.data() + static_cast<std::size_t>(ch) * k * k;
          for (int kh = 0; kh < k; ++kh) {
            const int hoff = kh * d - p;
            const int ho_lo = ceil_div_pos(-hoff, s);
            const int ho_hi = std::min(ho - 1, (h - 1 - hoff) / s);
            for (int kw = 0; kw < k; ++kw) {
              const real wv = wbase[kh * k + kw];
              const int woff = kw * d - p;
              const int wo_lo = ceil_div_pos(-woff, s);
              const int wo_hi = std::min(wo - 1, (wd - 1 - woff) / s);
              for (int oh = ho_lo; oh <= ho_hi; ++oh) {
                const real* irow = ibase + static_cast<std::size_t>(oh * s + hoff) * wd + woff;
                real* orow = obase + static_cast<std::size_t>(oh) * wo;
                if (s == 1) {
                  for (int ow = wo_lo; ow <= wo_hi; ++ow) orow[ow] += wv * irow[ow];
                } else {
                  for (int ow = wo_lo; ow <= wo_hi; ++ow) orow[ow] += wv * irow[ow * s];
                }
              }
            }
          }
        }
      return;
    }

    case Prim::Relu: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = x[i] > 0 ? x[i] : 0;
      return;
    }

    case Prim::MaxPool: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const int batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int s = n.stride, ho = h / s, wo = wd / s, p = 1;
      std::size_t oi = 0;
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t plane = (static_cast<std::size_t>(b) * c + ch) * h * wd;
          const real* ibase = x.data() + plane;
          for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow, ++oi) {
              real best = -std::numeric_limits<real>::infinity();
              int best_idx = -1;
              for (int kh = 0; kh < 3; ++kh) {
                const int ih = oh * s + kh - p;
                if (ih < 0 || ih >= h) continue;
                for (int kw = 0; kw < 3; ++kw) {
                  const int iw = ow * s + kw - p;
                  if (iw < 0 || iw >= wd) continue;
                  const real v = ibase[ih * wd + iw];
                  if (v > best) {
                    best = v;
                    best_idx = static_cast<int>(plane) + ih * wd + iw;
                  }
                }
              }
              n.out[oi] = best;
              n.argmax[oi] = best_idx;
            }
        }
      return;
    }

    case Prim::AvgPool: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const int batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int s = n.stride, win = n.window, p = (win - 1) / 2, ho = h / s, wo = wd / s;
      std::size_t oi = 0;
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const real* ibase = x.data() + (static_cast<std::size_t>(b) * c + ch) * h * wd;
          for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow, ++oi) {
              real acc = 0;
              int cnt = 0;
              for (int kh = 0; kh < win; ++kh) {
                const int ih = oh * s + kh - p;
                if (ih < 0 || ih >= h) continue;
                for (int kw = 0; kw < win; ++kw) {
                  const int iw = ow * s + kw - p;
                  if (iw < 0 || iw >= wd) continue;
                  acc += ibase[ih * wd + iw];
                  ++cnt;
                }
              }
              n.out[oi] = acc / cnt;
            }
        }
      return;
    }

    case Prim::GlobalAvgPool: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const int batch = x.extent(0), c = x.extent(1);
      const int hw = x.extent(2) * x.extent(3);
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const real* plane = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
          real acc = 0;
          for (int i = 0; i < hw; ++i) acc += plane[i];
          n.out[static_cast<std::size_t>(b) * c + ch] = acc / hw;
        }
      return;
    }

    case Prim::ConcatChannels: {
      const int batch = n.out.extent(0), co = n.out.extent(1);
      const int hw = n.out.extent(2) * n.out.extent(3);
      int coff = 0;
      for (NodeId id : n.inputs) {
        const Tensor& x = nodes_[static_cast<size_t>(id)].out;
        const int ci = x.extent(1);
        for (int b = 0; b < batch; ++b) {
          const real* src = x.data() + static_cast<std::size_t>(b) * ci * hw;
          real* dst = n.out.data() + (static_cast<std::size_t>(b) * co + coff) * hw;
          std::copy(src, src + static_cast<std::size_t>(ci) * hw, dst);
        }
        coff += ci;
      }
      return;
    }

    case Prim::BatchNorm: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const int batch = x.extent(0), c = x.extent(1);
      const int hw = x.extent(2) * x.extent(3);
      const std::size_t chan_stride = static_cast<std::size_t>(hw);
      const std::size_t batch_stride = static_cast<std::size_t>(c) * hw;
      const real m = static_cast<real>(batch) * hw;
      for (int ch = 0; ch < c; ++ch) {
        real mean, inv_std;
        if (train_) {
          real acc = 0;
          for (int b = 0; b < batch; ++b) {
            const real* plane = x.data() + b * batch_stride + ch * chan_stride;
            for (int i = 0; i < hw; ++i) acc += plane[i];
          }
          mean = acc / m;
          real var_acc = 0;
          for (int b = 0; b < batch; ++b) {
            const real* plane = x.data() + b * batch_stride + ch * chan_stride;
            for (int i = 0; i < hw; ++i) {
              const real d = plane[i] - mean;
              var_acc += d * d;
            }
          }
          const real var = var_acc / m;
          inv_std = real(1) / std::sqrt(var + kBnEps);
          if (update_stats_) {
            n.running_mean[static_cast<size_t>(ch)] =
                (1 - kBnMomentum) * n.running_mean[static_cast<size_t>(ch)] + kBnMomentum * mean;
            n.running_var[static_cast<size_t>(ch)] =
                (1 - kBnMomentum) * n.running_var[static_cast<size_t>(ch)] + kBnMomentum * var;
          }
        } else {
          mean = n.running_mean[static_cast<size_t>(ch)];
          inv_std = real(1) / std::sqrt(n.running_var[static_cast<size_t>(ch)] + kBnEps);
        }
        n.saved[static_cast<size_t>(ch)] = inv_std;
        n.saved2[static_cast<size_t>(ch)] = mean;
        for (int b = 0; b < batch; ++b) {
          const real* src = x.data() + b * batch_stride + ch * chan_stride;
          real* dst = n.out.data() + b * batch_stride + ch * chan_stride;
          for (int i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * inv_std;
        }
      }
      return;
    }

    case Prim::Softmax: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const auto& shape = x.shape();
      std::size_t outer = 1, inner = 1;
      for (int i = 0; i < n.axis; ++i) outer *= static_cast<std::size_t>(shape[static_cast<size_t>(i)]);
      for (int i = n.axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(shape[static_cast<size_t>(i)]);
      const std::size_t len = static_cast<std::size_t>(shape[static_cast<size_t>(n.axis)]);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          real mx = x[base];
          for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
          real denom = 0;
          for (std::size_t i = 0; i < len; ++i) {
            const real e = std::exp(x[base + i * inner] - mx);
            n.out[base + i * inner] = e;
            denom += e;
          }
          for (std::size_t i = 0; i < len; ++i) n.out[base + i * inner] /= denom;
        }
      return;
    }

    case Prim::Log: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      if (n.log_floor > 0) {
        for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = std::log(std::max(x[i], n.log_floor));
      } else {
        for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = std::log(x[i]);
      }
      return;
    }

    case Prim::Sum: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      real acc = 0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
      n.out[0] = acc;
      return;
    }

    case Prim::Square: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = x[i] * x[i];
      return;
    }

    case Prim::Abs: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = std::fabs(x[i]);
      return;
    }

    case Prim::CrossEntropySoftmax: {
      const Tensor& l = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& y = nodes_[static_cast<size_t>(n.inputs[1])].out;
      const int batch = l.extent(0), classes = l.extent(1);
      real loss = 0;
      for (int b = 0; b < batch; ++b) {
        const real* lrow = l.data() + static_cast<std::size_t>(b) * classes;
        const real* yrow = y.data() + static_cast<std::size_t>(b) * classes;
        real* prow = n.saved.data() + static_cast<std::size_t>(b) * classes;
        real mx = lrow[0];
        for (int k = 1; k < classes; ++k) mx = std::max(mx, lrow[k]);
        real denom = 0;
        for (int k = 0; k < classes; ++k) denom += std::exp(lrow[k] - mx);
        const real lse = mx + std::log(denom);
        for (int k = 0; k < classes; ++k) {
          prow[k] = std::exp(lrow[k] - lse);
          loss -= yrow[k] * (lrow[k] - lse);
        }
      }
      n.out[0] = loss / batch;
      return;
    }

    case Prim::Gather: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      for (std::size_t i = 0; i < n.gather.size(); ++i) n.out[i] = x[static_cast<std::size_t>(n.gather[i])];
      return;
    }
  }
}

void Graph::evaluate() {
  if (!unbound_.empty()) {
    const Node& n = nodes_[static_cast<size_t>(*unbound_.begin())];
    fail(ErrorKind::Contract, "evaluate: input '" + n.name + "' was never bound");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    forward_node(n);
    const real* data = n.out.data();
    for (std::size_t j = 0; j < n.out.size(); ++j) {
      if (!std::isfinite(data[j]))
        fail(ErrorKind::Numeric, "non-finite output at " + node_desc(n, static_cast<NodeId>(i)) + ", element " +
                                     std::to_string(j));
    }
  }
}

// ---------------------------------------------------------------------------
// backward kernels
// ---------------------------------------------------------------------------

void Graph::backward_node(Node& n, std::vector<char>& touched) {
  auto touch = [&](NodeId id) { touched[static_cast<size_t>(id)] = 1; };

  switch (n.prim) {
    case Prim::Input:
    case Prim::Param:
    case Prim::Constant:
      return;

    case Prim::Add: {
      const Tensor& g = n.grad;
      if (n.inputs.size() == 2 && nodes_[static_cast<size_t>(n.inputs[1])].out.rank() == 1 && n.out.rank() == 2) {
        Tensor& ga = nodes_[static_cast<size_t>(n.inputs[0])].grad;
        Tensor& gb = nodes_[static_cast<size_t>(n.inputs[1])].grad;
        const int rows = n.out.extent(0), cols = n.out.extent(1);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) {
            const real gv = g[static_cast<size_t>(r * cols + c)];
            ga[static_cast<size_t>(r * cols + c)] += gv;
            gb[static_cast<size_t>(c)] += gv;
          }
        touch(n.inputs[0]);
        touch(n.inputs[1]);
        return;
      }
      for (NodeId id : n.inputs) {
        nodes_[static_cast<size_t>(id)].grad.add_scaled(g, 1);
        touch(id);
      }
      return;
    }

    case Prim::Mul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].out;
      Tensor& ga = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      Tensor& gb = nodes_[static_cast<size_t>(n.inputs[1])].grad;
      for (std::size_t i = 0; i < n.out.size(); ++i) {
        ga[i] += n.grad[i] * b[i];
        gb[i] += n.grad[i] * a[i];
      }
      touch(n.inputs[0]);
      touch(n.inputs[1]);
      return;
    }

    case Prim::ScalarScale: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      if (n.inputs.size() == 2) {
        const real coeff = nodes_[static_cast<size_t>(n.inputs[1])].out[static_cast<size_t>(n.index)];
        Tensor& gc = nodes_[static_cast<size_t>(n.inputs[1])].grad;
        real acc = 0;
        for (std::size_t i = 0; i < n.out.size(); ++i) {
          gx[i] += coeff * n.grad[i];
          acc += n.grad[i] * x[i];
        }
        gc[static_cast<size_t>(n.index)] += acc;
        touch(n.inputs[1]);
      } else {
        gx.add_scaled(n.grad, n.scale_a);
      }
      touch(n.inputs[0]);
      return;
    }

    case Prim::MatMul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].out;
      Tensor& ga = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      Tensor& gb = nodes_[static_cast<size_t>(n.inputs[1])].grad;
      const int rows = a.extent(0), inner = a.extent(1), cols = b.extent(1);
      for (int r = 0; r < rows; ++r) {
        const real* grow = n.grad.data() + static_cast<std::size_t>(r) * cols;
        const real* arow = a.data() + static_cast<std::size_t>(r) * inner;
        real* garow = ga.data() + static_cast<std::size_t>(r) * inner;
        for (int i = 0; i < inner; ++i) {
          const real* brow = b.data() + static_cast<std::size_t>(i) * cols;
          real* gbrow = gb.data() + static_cast<std::size_t>(i) * cols;
          real acc = 0;
          const real av = arow[i];
          for (int c = 0; c < cols; ++c) {
            acc += grow[c] * brow[c];
            gbrow[c] += av * grow[c];
          }
          garow[i] += acc;
        }
      }
      touch(n.inputs[0]);
      touch(n.inputs[1]);
      return;
    }

    case Prim::Conv2d: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& w = nodes_[static_cast<size_t>(n.inputs[1])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      Tensor& gw = nodes_[static_cast<size_t>(n.inputs[1])].grad;
      const int batch = x.extent(0), ci = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int co = w.extent(0), k = w.extent(2);
      const int s = n.stride, d = n.dilation, p = ((k - 1) * d) / 2;
      const int ho = h / s, wo = wd / s;
      for (int b = 0; b < batch; ++b)
        for (int och = 0; och < co; ++och) {
          const real* gbase = n.grad.data() + (static_cast<std::size_t>(b) * co + och) * ho * wo;
          for (int ich = 0; ich < ci; ++ich) {
            const real* ibase = x.data() + (static_cast<std::size_t>(b) * ci + ich) * h * wd;
            real* gibase = gx.data() + (static_cast<std::size_t>(b) * ci + ich) * h * wd;
            const real* wbase = w.data() + (static_cast<std::size_t>(och) * ci + ich) * k * k;
            real* gwbase = gw.data() + (static_cast<std::size_t>(och) * ci + ich) * k * k;
            for (int kh = 0; kh < k; ++kh) {
              const int hoff = kh * d - p;
              const int ho_lo = ceil_div_pos(-hoff, s);
              const int ho_hi = std::min(ho - 1, (h - 1 - hoff) / s);
              for (int kw = 0; kw < k; ++kw) {
                const real wv = wbase[kh * k + kw];
                const int woff = kw * d - p;
                const int wo_lo = ceil_div_pos(-woff, s);
                const int wo_hi = std::min(wo - 1, (wd - 1 - woff) / s);
                real wacc = 0;
                for (int oh = ho_lo; oh <= ho_hi; ++oh) {
                  const real* grow = gbase + static_cast<std::size_t>(oh) * wo;
                  const real* irow = ibase + static_cast<std::size_t>(oh * s + hoff) * wd + woff;
                  real* girow = gibase + static_cast<std::size_t>(oh * s + hoff) * wd + woff;
                  for (int ow = wo_lo; ow <= wo_hi; ++ow) {
                    const real gv = grow[ow];
                    girow[ow * s] += wv * gv;
                    wacc += irow[ow * s] * gv;
                  }
                }
                gwbase[kh * k + kw] += wacc;
              }
            }
          }
        }
      touch(n.inputs[0]);
      touch(n.inputs[1]);
      return;
    }

    case Prim::DepthwiseConv2d: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      const Tensor& w = nodes_[static_cast<size_t>(n.inputs[1])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      Tensor& gw = nodes_[static_cast<size_t>(n.inputs[1])].grad;
      const int batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int k = w.extent(1);
      const int s = n.stride, d = n.dilation, p = ((k - 1) * d) / 2;
      const int ho = h / s, wo = wd / s;
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const real* gbase = n.grad.data() + (static_cast<std::size_t>(b) * c + ch) * ho * wo;
          const real* ibase = x.data() + (static_cast<std::size_t>(b) * c + ch) * h * wd;
          real* gibase = gx.data() + (static_cast<std::size_t>(b) * c + ch) * h * wd;
          const real* wbase = w.data() + static_cast<std::size_t>(ch) * k * k;
          real* gwbase = gw.data() + static_cast<std::size_t>(ch) * k * k;
          for (int kh = 0; kh < k; ++kh) {
            const int hoff = kh * d - p;
            const int ho_lo = ceil_div_pos(-hoff, s);
            const int ho_hi = std::min(ho - 1, (h - 1 - hoff) / s);
            for (int kw = 0; kw < k; ++kw) {
              const real wv = wbase[kh * k + kw];
              const int woff = kw * d - p;
              const int wo_lo = ceil_div_pos(-woff, s);
              const int wo_hi = std::min(wo - 1, (wd - 1 - woff) / s);
              real wacc = 0;
              for (int oh = ho_lo; oh <= ho_hi; ++oh) {
                const real* grow = gbase + static_cast<std::size_t>(oh) * wo;
                const real* irow = ibase + static_cast<std::size_t>(oh * s + hoff) * wd + woff;
                real* girow = gibase + static_cast<std::size_t>(oh * s + hoff) * wd + woff;
                for (int ow = wo_lo; ow <= wo_hi; ++ow) {
                  const real gv = grow[ow];
                  girow[ow * s] += wv * gv;
                  wacc += irow[ow * s] * gv;
                }
              }
              gwbase[kh * k + kw] += wacc;
            }
          }
        }
      touch(n.inputs[0]);
      touch(n.inputs[1]);
      return;
    }

    case Prim::Relu: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      for (std::size_t i = 0; i < n.out.size(); ++i)
        if (x[i] > 0) gx[i] += n.grad[i];
      touch(n.inputs[0]);
      return;
    }

    case Prim::MaxPool: {
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      for (std::size_t i = 0; i < n.out.size(); ++i) gx[static_cast<std::size_t>(n.argmax[i])] += n.grad[i];
      touch(n.inputs[0]);
      return;
    }

    case Prim::AvgPool: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      const int batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
      const int s = n.stride, win = n.window, p = (win - 1) / 2, ho = h / s, wo = wd / s;
      std::size_t oi = 0;
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          real* gibase = gx.data() + (static_cast<std::size_t>(b) * c + ch) * h * wd;
          for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow, ++oi) {
              int cnt = 0;
              for (int kh = 0; kh < win; ++kh) {
                const int ih = oh * s + kh - p;
                if (ih < 0 || ih >= h) continue;
                for (int kw = 0; kw < win; ++kw) {
                  const int iw = ow * s + kw - p;
                  if (iw >= 0 && iw < wd) ++cnt;
                }
              }
              const real gv = n.grad[oi] / cnt;
              for (int kh = 0; kh < win; ++kh) {
                const int ih = oh * s + kh - p;
                if (ih < 0 || ih >= h) continue;
                for (int kw = 0; kw < win; ++kw) {
                  const int iw = ow * s + kw - p;
                  if (iw >= 0 && iw < wd) gibase[ih * wd + iw] += gv;
                }
              }
            }
        }
      touch(n.inputs[0]);
      return;
    }

    case Prim::GlobalAvgPool: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      const int batch = x.extent(0), c = x.extent(1);
      const int hw = x.extent(2) * x.extent(3);
      for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const real gv = n.grad[static_cast<std::size_t>(b) * c + ch] / hw;
          real* plane = gx.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
          for (int i = 0; i < hw; ++i) plane[i] += gv;
        }
      touch(n.inputs[0]);
      return;
    }

    case Prim::ConcatChannels: {
      const int batch = n.out.extent(0), co = n.out.extent(1);
      const int hw = n.out.extent(2) * n.out.extent(3);
      int coff = 0;
      for (NodeId id : n.inputs) {
        Tensor& gx = nodes_[static_cast<size_t>(id)].grad;
        const int ci = nodes_[static_cast<size_t>(id)].out.extent(1);
        for (int b = 0; b < batch; ++b) {
          const real* src = n.grad.data() + (static_cast<std::size_t>(b) * co + coff) * hw;
          real* dst = gx.data() + static_cast<std::size_t>(b) * ci * hw;
          for (std::size_t i = 0; i < static_cast<std::size_t>(ci) * hw; ++i) dst[i] += src[i];
        }
        coff += ci;
        touch(id);
      }
      return;
    }

    case Prim::BatchNorm: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      const int batch = x.extent(0), c = x.extent(1);
      const int hw = x.extent(2) * x.extent(3);
      const std::size_t chan_stride = static_cast<std::size_t>(hw);
      const std::size_t batch_stride = static_cast<std::size_t>(c) * hw;
      const real m = static_cast<real>(batch) * hw;
      for (int ch = 0; ch < c; ++ch) {
        const real inv_std = n.saved[static_cast<size_t>(ch)];
        if (!train_) {
          // frozen statistics: plain per-channel affine
          for (int b = 0; b < batch; ++b) {
            const real* grow = n.grad.data() + b * batch_stride + ch * chan_stride;
            real* gxrow = gx.data() + b * batch_stride + ch * chan_stride;
            for (int i = 0; i < hw; ++i) gxrow[i] += grow[i] * inv_std;
          }
          continue;
        }
        real gsum = 0, gdot = 0;
        for (int b = 0; b < batch; ++b) {
          const real* grow = n.grad.data() + b * batch_stride + ch * chan_stride;
          const real* xhat = n.out.data() + b * batch_stride + ch * chan_stride;
          for (int i = 0; i < hw; ++i) {
            gsum += grow[i];
            gdot += grow[i] * xhat[i];
          }
        }
        const real scale = inv_std / m;
        for (int b = 0; b < batch; ++b) {
          const real* grow = n.grad.data() + b * batch_stride + ch * chan_stride;
          const real* xhat = n.out.data() + b * batch_stride + ch * chan_stride;
          real* gxrow = gx.data() + b * batch_stride + ch * chan_stride;
          for (int i = 0; i < hw; ++i) gxrow[i] += scale * (m * grow[i] - gsum - xhat[i] * gdot);
        }
      }
      touch(n.inputs[0]);
      return;
    }

    case Prim::Softmax: {
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      const auto& shape = n.out.shape();
      std::size_t outer = 1, inner = 1;
      for (int i = 0; i < n.axis; ++i) outer *= static_cast<std::size_t>(shape[static_cast<size_t>(i)]);
      for (int i = n.axis + 1; i < n.out.rank(); ++i) inner *= static_cast<std::size_t>(shape[static_cast<size_t>(i)]);
      const std::size_t len = static_cast<std::size_t>(shape[static_cast<size_t>(n.axis)]);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          real dot = 0;
          for (std::size_t i = 0; i < len; ++i) dot += n.grad[base + i * inner] * n.out[base + i * inner];
          for (std::size_t i = 0; i < len; ++i)
            gx[base + i * inner] += n.out[base + i * inner] * (n.grad[base + i * inner] - dot);
        }
      touch(n.inputs[0]);
      return;
    }

    case Prim::Log: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      for (std::size_t i = 0; i < n.out.size(); ++i) {
        if (n.log_floor > 0 && x[i] < n.log_floor) continue;  // clamped: flat
        gx[i] += n.grad[i] / x[i];
      }
      touch(n.inputs[0]);
      return;
    }

    case Prim::Sum: {
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      const real gv = n.grad[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv;
      touch(n.inputs[0]);
      return;
    }

    case Prim::Square: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      for (std::size_t i = 0; i < n.out.size(); ++i) gx[i] += 2 * x[i] * n.grad[i];
      touch(n.inputs[0]);
      return;
    }

    case Prim::Abs: {
      const Tensor& x = nodes_[static_cast<size_t>(n.inputs[0])].out;
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      for (std::size_t i = 0; i < n.out.size(); ++i) {
        if (x[i] > 0)
          gx[i] += n.grad[i];
        else if (x[i] < 0)
          gx[i] -= n.grad[i];
      }
      touch(n.inputs[0]);
      return;
    }

    case Prim::CrossEntropySoftmax: {
      const Tensor& y = nodes_[static_cast<size_t>(n.inputs[1])].out;
      Tensor& gl = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      const int batch = n.saved.extent(0), classes = n.saved.extent(1);
      const real gv = n.grad[0];
      for (int b = 0; b < batch; ++b) {
        const real* prow = n.saved.data() + static_cast<std::size_t>(b) * classes;
        const real* yrow = y.data() + static_cast<std::size_t>(b) * classes;
        real* grow = gl.data() + static_cast<std::size_t>(b) * classes;
        real ysum = 0;
        for (int k = 0; k < classes; ++k) ysum += yrow[k];
        for (int k = 0; k < classes; ++k) grow[k] += gv * (ysum * prow[k] - yrow[k]) / batch;
      }
      touch(n.inputs[0]);  // targets receive no gradient
      return;
    }

    case Prim::Gather: {
      Tensor& gx = nodes_[static_cast<size_t>(n.inputs[0])].grad;
      for (std::size_t i = 0; i < n.gather.size(); ++i) gx[static_cast<std::size_t>(n.gather[i])] += n.grad[i];
      touch(n.inputs[0]);
      return;
    }
  }
}

void Graph::backward(NodeId loss) {
  Node& root = nodes_[static_cast<size_t>(loss)];
  if (root.out.size() != 1)
    fail(ErrorKind::Contract, "backward: loss must be scalar, got " + root.out.shape_str() + " at " +
                                  node_desc(root, loss));
  for (Node& n : nodes_) n.grad.zero();
  std::vector<char> touched(nodes_.size(), 0);
  touched[static_cast<size_t>(loss)] = 1;
  root.grad[0] = 1;
  for (NodeId k = loss; k >= 0; --k) {
    if (!touched[static_cast<size_t>(k)]) continue;
    backward_node(nodes_[static_cast<size_t>(k)], touched);
  }
}

// ---------------------------------------------------------------------------
// spec-level helpers
// ---------------------------------------------------------------------------

std::map<std::string, Tensor> evaluate(Graph& g, const std::map<std::string, Tensor>& inputs,
                                       const std::vector<std::string>& outputs) {
  for (const auto& [name, value] : inputs) g.bind(name, value);
  g.evaluate();
  std::map<std::string, Tensor> result;
  for (const std::string& name : outputs) result[name] = g.value(g.output(name));
  return result;
}

std::map<std::string, Tensor> gradients(Graph& g, NodeId loss) {
  g.backward(loss);
  std::map<std::string, Tensor> result;
  for (LeafRole role : {LeafRole::Theta, LeafRole::Alpha, LeafRole::Beta})
    for (NodeId id : g.leaves(role)) result[g.node(id).name] = g.grad(id);
  return result;
}

real finite_difference_check(const std::function<real(const Tensor&)>& f, const Tensor& point,
                             const Tensor& analytic, real epsilon) {
  if (epsilon <= 0) fail(ErrorKind::Contract, "finite_difference_check: epsilon must be positive");
  if (!point.same_shape(analytic))
    fail(ErrorKind::Contract, "finite_difference_check: gradient shape " + analytic.shape_str() +
                                  " does not match point " + point.shape_str());
  Tensor probe = point;
  real worst = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const real saved = probe[i];
    probe[i] = saved + epsilon;
    const real up = f(probe);
    probe[i] = saved - epsilon;
    const real down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      fail(ErrorKind::Numeric, "finite_difference_check: non-finite function value");
    const real numeric = (up - down) / (2 * epsilon);
    const real err = std::fabs(analytic[i] - numeric) / std::max(real(1), std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

real finite_difference_check(Graph& g, NodeId leaf, NodeId loss, real epsilon) {
  g.evaluate();
  g.backward(loss);
  const Tensor analytic = g.grad(leaf);
  const Tensor point = g.value(leaf);
  const bool was_updating = g.update_batch_stats();
  g.set_update_batch_stats(false);
  auto f = [&](const Tensor& x) {
    g.leaf_value(leaf) = x;
    g.evaluate();
    return g.value(loss).item();
  };
  const real err = finite_difference_check(f, point, analytic, epsilon);
  g.leaf_value(leaf) = point;
  g.evaluate();
  g.set_update_batch_stats(was_updating);
  return err;
}

}  // namespace entnas
