#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <set>

#include "common.hpp"
#include "data/data.hpp"

using namespace entnas;

namespace {

std::string write_temp(const std::string& name, const std::vector<unsigned char>& bytes) {
  std::string path = "./" + name;
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return path;
}

// Two-record CIFAR-style fixture with recognizable corner values.
std::vector<unsigned char> cifar_fixture() {
  std::vector<unsigned char> bytes(2 * 3073, 0);
  bytes[0] = 3;                       // record 0 label
  bytes[1] = 255;                     // R plane, first pixel
  bytes[1 + 1024] = 128;              // G plane, first pixel
  bytes[1 + 2048 + 1023] = 51;        // B plane, last pixel
  bytes[3073] = 9;                    // record 1 label
  bytes[3073 + 1 + 512] = 17;         // R plane, middle pixel
  return bytes;
}

}  // namespace

TEST_CASE("synth: bitwise deterministic per seed, balanced, in range") {
  Dataset a = synth_generate(4, 50, 8, 8, 77);
  Dataset b = synth_generate(4, 50, 8, 8, 77);
  REQUIRE(a.count() == 50);
  CHECK(a.labels == b.labels);
  bool identical = true;
  for (std::size_t i = 0; i < a.images.size(); ++i)
    if (a.images.data()[i] != b.images.data()[i]) identical = false;
  CHECK(identical);

  std::array<int, 4> per_class{0, 0, 0, 0};
  for (int label : a.labels) per_class[label]++;
  for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 50 / 4 + (c < 50 % 4 ? 1 : 0));

  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images.data()[i] >= 0.0);
    CHECK(a.images.data()[i] <= 1.0);
  }

  Dataset c = synth_generate(4, 50, 8, 8, 78);
  real max_diff = 0;
  for (std::size_t i = 0; i < a.images.size(); ++i)
    max_diff = std::max(max_diff, std::abs(a.images.data()[i] - c.images.data()[i]));
  CHECK(max_diff > 0.01);  // a different seed draws different phases and noise
}

TEST_CASE("synth: nearest-centroid probe lands above chance but well below perfect") {
  // The tint separates classes linearly only in part; gratings with random
  // phase cancel in the class means. A trivial dataset would score ~1.0 here.
  const int classes = 4, h = 16, w = 16;
  Dataset train = synth_generate(classes, 400, h, w, 11);
  Dataset eval = synth_generate(classes, 200, h, w, 12);
  const int dim = 3 * h * w;
  std::vector<std::vector<real>> centroid(classes, std::vector<real>(dim, 0));
  std::vector<int> counts(classes, 0);
  for (int n = 0; n < train.count(); ++n) {
    const real* row = train.images.data() + static_cast<std::size_t>(n) * dim;
    for (int k = 0; k < dim; ++k) centroid[train.labels[n]][k] += row[k];
    counts[train.labels[n]]++;
  }
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < dim; ++k) centroid[c][k] /= counts[c];
  int hits = 0;
  for (int n = 0; n < eval.count(); ++n) {
    const real* row = eval.images.data() + static_cast<std::size_t>(n) * dim;
    int best = -1;
    real best_dist = 0;
    for (int c = 0; c < classes; ++c) {
      real dist = 0;
      for (int k = 0; k < dim; ++k) {
        const real d = row[k] - centroid[c][k];
        dist += d * d;
      }
      if (best < 0 || dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    hits += (best == eval.labels[n]);
  }
  const real acc = real(hits) / eval.count();
  CHECK(acc > 0.30);  // clearly above the 0.25 chance rate
  CHECK(acc < 0.95);  // but a linear probe must not saturate the task
}

TEST_CASE("cifar loader: fixture round-trips labels and corner pixels") {
  const std::string path = write_temp("fixture_ok.bin", cifar_fixture());
  Dataset ds = load_cifar10_binary(path);
  REQUIRE(ds.count() == 2);
  CHECK(ds.classes == 10);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 9);
  CHECK(ds.images[0] == doctest::Approx(1.0));                  // (0, R, 0, 0)
  CHECK(ds.images[1024] == doctest::Approx(128.0 / 255.0));     // (0, G, 0, 0)
  CHECK(ds.images[3071] == doctest::Approx(51.0 / 255.0));      // (0, B, 31, 31)
  CHECK(ds.images[3072 + 512] == doctest::Approx(17.0 / 255.0));  // (1, R, 16, 0)
  CHECK(ds.images[2 * 3072 - 1] == doctest::Approx(0.0));       // (1, B, 31, 31)
  std::remove(path.c_str());
}

TEST_CASE("cifar loader: truncated file errors with the stray-byte offset") {
  auto bytes = cifar_fixture();
  bytes.pop_back();  // 6145 bytes: one full record plus 3072 stray bytes
  const std::string path = write_temp("fixture_trunc.bin", bytes);
  try {
    load_cifar10_binary(path);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
    CHECK(std::string(e.what()).find("3073") != std::string::npos);
    CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("cifar loader: label out of range names the record and offset") {
  auto bytes = cifar_fixture();
  bytes[3073] = 12;
  const std::string path = write_temp("fixture_label.bin", bytes);
  try {
    load_cifar10_binary(path);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
    CHECK(std::string(e.what()).find("label 12") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("cifar loader: missing file raises an io error") {
  CHECK_THROWS_AS(load_cifar10_binary("./no_such_file.bin"), Error);
}

TEST_CASE("split: disjoint, exhaustive, deterministic") {
  Dataset ds = synth_generate(4, 101, 8, 8, 5);
  auto [a, b] = split_dataset(ds, 0.5, 9);
  CHECK(a.count() == 50);
  CHECK(b.count() == 51);

  auto [a2, b2] = split_dataset(ds, 0.5, 9);
  CHECK(a.labels == a2.labels);
  bool same = true;
  for (std::size_t i = 0; i < a.images.size(); ++i)
    if (a.images.data()[i] != a2.images.data()[i]) same = false;
  CHECK(same);

  // Row multisets across both sides must recover the source exactly. Rows are
  // a.s. distinct here, so matching first-pixel values identifies rows.
  std::multiset<real> source, combined;
  const int plane = 3 * 8 * 8;
  for (int n = 0; n < ds.count(); ++n) source.insert(ds.images.data()[static_cast<std::size_t>(n) * plane]);
  for (int n = 0; n < a.count(); ++n) combined.insert(a.images.data()[static_cast<std::size_t>(n) * plane]);
  for (int n = 0; n < b.count(); ++n) combined.insert(b.images.data()[static_cast<std::size_t>(n) * plane]);
  CHECK(source == combined);

  CHECK_THROWS_AS(split_dataset(ds, 0.0, 1), Error);
  CHECK_THROWS_AS(split_dataset(ds, 1.0, 1), Error);
}

TEST_CASE("epoch order: permutation, replayable, epoch-sensitive") {
  auto e0 = epoch_order(10, 4, 0);
  auto e0_again = epoch_order(10, 4, 0);
  auto e1 = epoch_order(10, 4, 1);
  CHECK(e0 == e0_again);
  CHECK(e0 != e1);
  std::set<int> seen(e0.begin(), e0.end());
  CHECK(seen.size() == 10);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 9);
}

TEST_CASE("gather: one-hot targets, normalization, and padded tail") {
  Dataset ds = synth_generate(3, 9, 4, 4, 2);
  Normalizer norm = compute_normalizer(ds);

  // Hand-check the channel-0 mean against a direct sum.
  real sum = 0;
  for (int n = 0; n < ds.count(); ++n)
    for (int k = 0; k < 16; ++k) sum += ds.images.data()[static_cast<std::size_t>(n) * 48 + k];
  CHECK(norm.mean[0] == doctest::Approx(sum / (9 * 16)).epsilon(1e-12));

  auto order = epoch_order(ds.count(), 3, 0);
  Batch batch = gather_batch(ds, order, 4, 9, 8, norm);  // 5 real rows, 3 padded
  CHECK(batch.real_count == 5);
  CHECK(batch.x.extent(0) == 8);
  CHECK(batch.labels.size() == 5);
  for (int r = 0; r < 5; ++r) {
    CHECK(batch.labels[r] == ds.labels[order[4 + r]]);
    real row_sum = 0;
    for (int c = 0; c < 3; ++c) row_sum += batch.y[static_cast<std::size_t>(r) * 3 + c];
    CHECK(row_sum == doctest::Approx(1.0));
    CHECK(batch.y[static_cast<std::size_t>(r) * 3 + batch.labels[r]] == doctest::Approx(1.0));
  }
  // Padded rows repeat the first row of the chunk bit for bit.
  for (int k = 0; k < 48; ++k)
    CHECK(batch.x.data()[5 * 48 + k] == batch.x.data()[0 * 48 + 0 + k]);

  // Normalized full dataset should have near-zero mean per channel.
  std::vector<int> all(ds.count());
  for (int i = 0; i < ds.count(); ++i) all[i] = i;
  Batch whole = gather_batch(ds, all, 0, all.size(), ds.count(), norm);
  real ch0 = 0;
  for (int n = 0; n < 9; ++n)
    for (int k = 0; k < 16; ++k) ch0 += whole.x.data()[static_cast<std::size_t>(n) * 48 + k];
  CHECK(std::abs(ch0 / (9 * 16)) < 1e-9);

  CHECK_THROWS_AS(gather_batch(ds, all, 0, 9, 4, norm), Error);
}
