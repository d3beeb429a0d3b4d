#include "ops/ops.hpp"

#include <cmath>

namespace entnas {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::SepConv3x3: return "sep_conv_3x3";
    case OpKind::SepConv5x5: return "sep_conv_5x5";
    case OpKind::DilSepConv3x3: return "dil_sep_conv_3x3";
    case OpKind::DilSepConv5x5: return "dil_sep_conv_5x5";
    case OpKind::MaxPool3x3: return "max_pool_3x3";
    case OpKind::AvgPool3x3: return "avg_pool_3x3";
    case OpKind::SkipConnect: return "skip_connect";
  }
  return "?";
}

OpKind op_from_name(const std::string& name) {
  for (int i = 0; i < kNumOps; ++i)
    if (name == op_name(static_cast<OpKind>(i))) return static_cast<OpKind>(i);
  fail(ErrorKind::Format, "unknown operation name '" + name + "'");
}

bool op_has_params(OpKind kind) {
  switch (kind) {
    case OpKind::MaxPool3x3:
    case OpKind::AvgPool3x3:
    case OpKind::SkipConnect:
      return false;
    default:
      return true;
  }
}

Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const real std = std::sqrt(real(2) / fan_in);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std * normal_real(rng);
  return t;
}

namespace {

// relu -> depthwise kxk -> pointwise 1x1 -> standardization, applied once.
NodeId separable_conv(Graph& g, NodeId z, int k, int dilation, int stride, const std::string& prefix, Rng& rng) {
  const int c = g.value(z).extent(1);
  NodeId dw = g.param(LeafRole::Theta, prefix + ".dw", kaiming_init({c, k, k}, k * k, rng));
  NodeId pw = g.param(LeafRole::Theta, prefix + ".pw", kaiming_init({c, c, 1, 1}, c, rng));
  NodeId h = g.relu(z);
  h = g.depthwise_conv2d(h, dw, stride, dilation);
  h = g.conv2d(h, pw, 1);
  return g.batch_norm(h, prefix + ".bn");
}

}  // namespace

NodeId apply_op(Graph& g, OpKind kind, NodeId z, int stride, const std::string& prefix, Rng& rng) {
  switch (kind) {
    case OpKind::SepConv3x3: return separable_conv(g, z, 3, 1, stride, prefix, rng);
    case OpKind::SepConv5x5: return separable_conv(g, z, 5, 1, stride, prefix, rng);
    case OpKind::DilSepConv3x3: return separable_conv(g, z, 3, 2, stride, prefix, rng);
    case OpKind::DilSepConv5x5: return separable_conv(g, z, 5, 2, stride, prefix, rng);
    case OpKind::MaxPool3x3: return g.max_pool3(z, stride);
    case OpKind::AvgPool3x3: return g.avg_pool(z, 3, stride);
    case OpKind::SkipConnect:
      // stride 2: parameter-free channel-preserving subsample (1x1-window
      // strided average), the pooling analogue of a factorized reduce.
      return stride == 1 ? z : g.avg_pool(z, 1, stride);
  }
  fail(ErrorKind::Contract, "apply_op: bad operation kind");
}

NodeId build_stem(Graph& g, NodeId images, int cell_channels, const std::string& prefix, Rng& rng) {
  if (cell_channels <= 0) fail(ErrorKind::Contract, "stem: channel count must be positive");
  const int in_c = g.value(images).extent(1);
  NodeId w = g.param(LeafRole::Theta, prefix + ".conv", kaiming_init({cell_channels, in_c, 3, 3}, in_c * 9, rng));
  return g.batch_norm(g.conv2d(images, w, 1), prefix + ".bn");
}

NodeId build_preprocess(Graph& g, NodeId x, int out_channels, bool reduce_spatial, const std::string& prefix,
                        Rng& rng) {
  const int in_c = g.value(x).extent(1);
  NodeId w = g.param(LeafRole::Theta, prefix + ".conv", kaiming_init({out_channels, in_c, 1, 1}, in_c, rng));
  NodeId h = g.conv2d(g.relu(x), w, reduce_spatial ? 2 : 1);
  return g.batch_norm(h, prefix + ".bn");
}

NodeId build_classifier(Graph& g, NodeId features, int num_classes, const std::string& prefix, Rng& rng) {
  if (num_classes < 2) fail(ErrorKind::Contract, "classifier: need at least two classes");
  const int in_c = g.value(features).extent(1);
  Tensor wt({in_c, num_classes});
  const real std = std::sqrt(real(1) / in_c);
  for (std::size_t i = 0; i < wt.size(); ++i) wt[i] = std * normal_real(rng);
  NodeId w = g.param(LeafRole::Theta, prefix + ".weight", std::move(wt));
  NodeId b = g.param(LeafRole::Theta, prefix + ".bias", Tensor::zeros({num_classes}));
  return g.add({g.matmul(g.global_avg_pool(features), w), b});
}

}  // namespace entnas
