#pragma once

#include <string>
#include <utility>
#include <vector>

#include "autodiff/tensor.hpp"

namespace entnas {

struct Dataset {
  Tensor images;            // (count, 3, H, W), values in [0,1]
  std::vector<int> labels;  // in [0, classes)
  int classes = 0;

  int count() const { return images.size() ? images.extent(0) : 0; }
  int height() const { return images.extent(2); }
  int width() const { return images.extent(3); }
};

// Class-conditional oriented gratings with a faint per-class channel tint and
// pixel noise: learnable by a small conv net, not linearly separable to 100%.
Dataset synth_generate(int classes, int count, int h, int w, std::uint64_t seed);

// CIFAR-10 binary batches: records of 3073 bytes (label, 1024 R, 1024 G,
// 1024 B, row-major). Rejects files whose size is not a multiple of 3073 and
// label bytes > 9, naming the byte offset.
Dataset load_cifar10_binary(const std::string& path);

// Deterministic shuffled split: first fraction -> first element of the pair.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, real fraction, std::uint64_t seed);

// Per-channel standardization constants, computed on a training set and
// applied to every batch fed to a network.
struct Normalizer {
  real mean[3] = {0, 0, 0};
  real stddev[3] = {1, 1, 1};
};
Normalizer compute_normalizer(const Dataset& ds);

// Index order for one epoch: a (seed, epoch)-keyed shuffle, chunked by the
// caller; the final short chunk is kept.
std::vector<int> epoch_order(int count, std::uint64_t seed, int epoch);

struct Batch {
  Tensor x;                 // (batch, 3, H, W), normalized
  Tensor y;                 // one-hot (batch, classes)
  std::vector<int> labels;  // only the first `real_count` entries are meaningful
  int real_count = 0;       // < batch size when the chunk was padded
};

// Materializes samples ds[idx[...]] into a batch of exactly pad_to rows
// (pad_to >= idx.size(); the tail repeats the first sample and is excluded
// from real_count).
Batch gather_batch(const Dataset& ds, const std::vector<int>& idx, std::size_t begin, std::size_t end, int pad_to,
                   const Normalizer& norm);

}  // namespace entnas
