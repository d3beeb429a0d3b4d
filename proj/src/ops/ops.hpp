#pragma once

#include <string>

#include "autodiff/graph.hpp"

namespace entnas {

// The candidate operation set. Order is load-bearing: alpha logits index it.
enum class OpKind : int {
  SepConv3x3 = 0,
  SepConv5x5,
  DilSepConv3x3,
  DilSepConv5x5,
  MaxPool3x3,
  AvgPool3x3,
  SkipConnect,
};
constexpr int kNumOps = 7;

const char* op_name(OpKind kind);
OpKind op_from_name(const std::string& name);  // format error on unknown name
bool op_has_params(OpKind kind);

// Kaiming fan-in normal init for convolution kernels.
Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng);

// Applies one candidate operation to z, creating the op's theta leaves under
// `prefix` (e.g. "c0.e0_2.sep_conv_3x3"). Channel count is taken from z.
// post: shape (batch, channels, H/stride, W/stride).
NodeId apply_op(Graph& g, OpKind kind, NodeId z, int stride, const std::string& prefix, Rng& rng);

// Raw images -> the shared initial cell input (both z0 and z1 read it):
// conv 3x3 (in->cell_channels) + batch standardization.
NodeId build_stem(Graph& g, NodeId images, int cell_channels, const std::string& prefix, Rng& rng);

// Aligns a previous cell output to this cell's width (and stride when the
// source kept a higher resolution): relu -> 1x1 conv -> standardization.
NodeId build_preprocess(Graph& g, NodeId x, int out_channels, bool reduce_spatial, const std::string& prefix,
                        Rng& rng);

// Global average pooling + linear head. Bias starts at zero.
NodeId build_classifier(Graph& g, NodeId features, int num_classes, const std::string& prefix, Rng& rng);

}  // namespace entnas
