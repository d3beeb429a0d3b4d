#include "data/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "common.hpp"

namespace entnas {

namespace {

constexpr std::uint64_t kSynthStream = 0x0d;
constexpr std::uint64_t kSplitStream = 0x51;
constexpr std::uint64_t kOrderStream = 0xb7;

constexpr real kGratingPeriod = 4.0;   // pixels per cycle
constexpr real kGratingAmp = 0.38;
constexpr real kTintAmp = 0.02;
constexpr real kPixelNoise = 0.06;

int uniform_index(Rng& rng, int bound) {  // in [0, bound)
  int v = static_cast<int>(uniform_real(rng) * bound);
  return std::min(v, bound - 1);
}

void fisher_yates(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[i], idx[uniform_index(rng, i + 1)]);
}

Dataset take_rows(const Dataset& ds, const std::vector<int>& rows) {
  const int h = ds.height(), w = ds.width();
  Dataset out;
  out.classes = ds.classes;
  out.images = Tensor::zeros({static_cast<int>(rows.size()), 3, h, w});
  out.labels.reserve(rows.size());
  const int plane = 3 * h * w;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(ds.images.data() + static_cast<std::size_t>(rows[r]) * plane, plane,
                out.images.data() + r * plane);
    out.labels.push_back(ds.labels[rows[r]]);
  }
  return out;
}

}  // namespace

Dataset synth_generate(int classes, int count, int h, int w, std::uint64_t seed) {
  if (classes < 2) fail(ErrorKind::Contract, "synth: need at least 2 classes, got " + std::to_string(classes));
  if (count < 1 || h < 1 || w < 1)
    fail(ErrorKind::Contract, "synth: count and image size must be positive");
  if (h % 4 != 0 || w % 4 != 0)
    fail(ErrorKind::Contract, "synth: image sides must be divisible by 4, got " + std::to_string(h) + "x" +
                                  std::to_string(w));
  Dataset ds;
  ds.classes = classes;
  ds.images = Tensor::zeros({count, 3, h, w});
  ds.labels.resize(count);
  Rng rng(mix_seed(seed, kSynthStream));
  const real freq = 2.0 * std::numbers::pi_v<real> / kGratingPeriod;
  for (int n = 0; n < count; ++n) {
    const int c = n % classes;  // round robin keeps classes balanced
    ds.labels[n] = c;
    const real angle = std::numbers::pi_v<real> * (c + real(0.5)) / classes;
    const real dx = std::cos(angle), dy = std::sin(angle);
    const real phase = uniform_range(rng, 0, 2 * std::numbers::pi_v<real>);
    for (int ch = 0; ch < 3; ++ch) {
      const real tint =
          kTintAmp * std::cos(2 * std::numbers::pi_v<real> * (real(c) / classes) + 2 * std::numbers::pi_v<real> * ch / 3);
      real* plane = ds.images.data() + ((static_cast<std::size_t>(n) * 3 + ch) * h) * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          real v = real(0.5) + kGratingAmp * std::sin(freq * (x * dx + y * dy) + phase) + tint +
                   kPixelNoise * normal_real(rng);
          plane[y * w + x] = std::clamp<real>(v, 0, 1);
        }
    }
  }
  return ds;
}

Dataset load_cifar10_binary(const std::string& path) {
  constexpr std::size_t kRecord = 3073;
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) fail(ErrorKind::Format, path + ": empty file");
  if (bytes.size() % kRecord != 0)
    fail(ErrorKind::Format, path + ": size " + std::to_string(bytes.size()) +
                                " is not a multiple of 3073 (stray " + std::to_string(bytes.size() % kRecord) +
                                " bytes at offset " + std::to_string(bytes.size() / kRecord * kRecord) + ")");
  const int n = static_cast<int>(bytes.size() / kRecord);
  Dataset ds;
  ds.classes = 10;
  ds.images = Tensor::zeros({n, 3, 32, 32});
  ds.labels.resize(n);
  for (int r = 0; r < n; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * kRecord;
    const int label = bytes[base];
    if (label > 9)
      fail(ErrorKind::Format, path + ": record " + std::to_string(r) + " at byte offset " + std::to_string(base) +
                                  ": label " + std::to_string(label) + " out of range");
    ds.labels[r] = label;
    real* dst = ds.images.data() + static_cast<std::size_t>(r) * 3072;
    for (int k = 0; k < 3072; ++k) dst[k] = bytes[base + 1 + k] / real(255);
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, real fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1))
    fail(ErrorKind::Contract, "split: fraction must lie strictly between 0 and 1");
  const int n = ds.count();
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, kSplitStream));
  fisher_yates(idx, rng);
  const int k = static_cast<int>(std::floor(fraction * n));
  if (k == 0 || k == n) fail(ErrorKind::Contract, "split: a side would be empty at this fraction and count");
  std::vector<int> a(idx.begin(), idx.begin() + k), b(idx.begin() + k, idx.end());
  return {take_rows(ds, a), take_rows(ds, b)};
}

Normalizer compute_normalizer(const Dataset& ds) {
  if (ds.count() == 0) fail(ErrorKind::Contract, "normalizer: empty dataset");
  Normalizer norm;
  const int h = ds.height(), w = ds.width(), n = ds.count();
  const std::size_t per_channel = static_cast<std::size_t>(n) * h * w;
  for (int ch = 0; ch < 3; ++ch) {
    real sum = 0, sum_sq = 0;
    for (int s = 0; s < n; ++s) {
      const real* plane = ds.images.data() + ((static_cast<std::size_t>(s) * 3 + ch) * h) * w;
      for (int k = 0; k < h * w; ++k) {
        sum += plane[k];
        sum_sq += plane[k] * plane[k];
      }
    }
    const real mean = sum / per_channel;
    const real var = std::max<real>(sum_sq / per_channel - mean * mean, 0);
    norm.mean[ch] = mean;
    norm.stddev[ch] = std::sqrt(var) + real(1e-8);
  }
  return norm;
}

std::vector<int> epoch_order(int count, std::uint64_t seed, int epoch) {
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = i;
  Rng rng(mix_seed(mix_seed(seed, kOrderStream), static_cast<std::uint64_t>(epoch)));
  fisher_yates(idx, rng);
  return idx;
}

Batch gather_batch(const Dataset& ds, const std::vector<int>& idx, std::size_t begin, std::size_t end, int pad_to,
                   const Normalizer& norm) {
  if (end > idx.size() || begin >= end) fail(ErrorKind::Contract, "gather_batch: bad index range");
  const int take = static_cast<int>(end - begin);
  if (pad_to < take) fail(ErrorKind::Contract, "gather_batch: pad_to smaller than the requested range");
  const int h = ds.height(), w = ds.width();
  Batch batch;
  batch.real_count = take;
  batch.x = Tensor::zeros({pad_to, 3, h, w});
  batch.y = Tensor::zeros({pad_to, ds.classes});
  batch.labels.resize(take);
  const int plane = 3 * h * w;
  for (int r = 0; r < pad_to; ++r) {
    const int src = idx[r < take ? begin + r : begin];  // tail rows repeat the first sample
    const real* from = ds.images.data() + static_cast<std::size_t>(src) * plane;
    real* to = batch.x.data() + static_cast<std::size_t>(r) * plane;
    for (int ch = 0; ch < 3; ++ch)
      for (int k = 0; k < h * w; ++k)
        to[ch * h * w + k] = (from[ch * h * w + k] - norm.mean[ch]) / norm.stddev[ch];
    batch.y.data()[static_cast<std::size_t>(r) * ds.classes + ds.labels[src]] = 1;
    if (r < take) batch.labels[r] = ds.labels[src];
  }
  return batch;
}

}  // namespace entnas
