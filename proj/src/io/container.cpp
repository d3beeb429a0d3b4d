#include "io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "common.hpp"

namespace entnas {

namespace {

constexpr char kMagic[8] = {'E', 'N', 'T', 'N', 'A', 'S', 'B', 'C'};
constexpr std::uint32_t kVersion = 1;

enum SectionKind : std::uint8_t { kU64 = 0, kString = 1, kTensor = 2, kTensorMap = 3, kIntList = 4 };

// ---- little-endian primitives ----

void put_bytes(std::string& out, const void* data, std::size_t n) {
  out.append(static_cast<const char*>(data), n);
}

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

void put_f64(std::string& out, double value) {
  put_le(out, std::bit_cast<std::uint64_t>(value));
}

struct Reader {
  const std::string& bytes;
  std::size_t at = 0;
  std::string path;

  [[noreturn]] void bad(const std::string& what) const {
    fail(ErrorKind::Format, path + ": " + what + " at byte offset " + std::to_string(at));
  }
  void need(std::size_t n) const {
    if (at + n > bytes.size()) bad("truncated (need " + std::to_string(n) + " more bytes)");
  }
  template <typename T>
  T get_le() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      u |= static_cast<U>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
    at += sizeof(T);
    return static_cast<T>(u);
  }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes.substr(at, n);
    at += n;
    return s;
  }
};

void put_name(std::string& out, const std::string& name) {
  put_le(out, static_cast<std::uint32_t>(name.size()));
  put_bytes(out, name.data(), name.size());
}

void put_tensor(std::string& out, const Tensor& t) {
  put_le(out, static_cast<std::uint32_t>(t.rank()));
  for (int d = 0; d < t.rank(); ++d) put_le(out, static_cast<std::int32_t>(t.extent(d)));
  for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, static_cast<double>(t[i]));
}

Tensor get_tensor(Reader& r) {
  const std::uint32_t rank = r.get_le<std::uint32_t>();
  if (rank > 8) r.bad("tensor rank " + std::to_string(rank) + " out of range");
  std::vector<int> shape;
  for (std::uint32_t d = 0; d < rank; ++d) {
    const std::int32_t e = r.get_le<std::int32_t>();
    if (e < 0) r.bad("negative tensor extent");
    shape.push_back(e);
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(r.get_f64());
  return t;
}

}  // namespace

void Container::save(const std::string& path) const {
  std::string out;
  put_bytes(out, kMagic, 8);
  put_le(out, kVersion);
  const std::uint32_t count = static_cast<std::uint32_t>(u64s.size() + strings.size() + tensors.size() +
                                                         tensor_maps.size() + int_lists.size());
  put_le(out, count);
  for (const auto& [name, v] : u64s) {
    out.push_back(static_cast<char>(kU64));
    put_name(out, name);
    put_le(out, v);
  }
  for (const auto& [name, s] : strings) {
    out.push_back(static_cast<char>(kString));
    put_name(out, name);
    put_le(out, static_cast<std::uint64_t>(s.size()));
    put_bytes(out, s.data(), s.size());
  }
  for (const auto& [name, t] : tensors) {
    out.push_back(static_cast<char>(kTensor));
    put_name(out, name);
    put_tensor(out, t);
  }
  for (const auto& [name, m] : tensor_maps) {
    out.push_back(static_cast<char>(kTensorMap));
    put_name(out, name);
    put_le(out, static_cast<std::uint32_t>(m.size()));
    for (const auto& [key, t] : m) {
      put_name(out, key);
      put_tensor(out, t);
    }
  }
  for (const auto& [name, list] : int_lists) {
    out.push_back(static_cast<char>(kIntList));
    put_name(out, name);
    put_le(out, static_cast<std::uint64_t>(list.size()));
    for (std::int64_t v : list) put_le(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::Io, "short write to " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{bytes, 0, path};
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) r.bad("not a container file (bad magic)");
  r.at = 8;
  const std::uint32_t version = r.get_le<std::uint32_t>();
  if (version != kVersion) r.bad("unsupported container version " + std::to_string(version));
  const std::uint32_t count = r.get_le<std::uint32_t>();
  Container c;
  for (std::uint32_t s = 0; s < count; ++s) {
    r.need(1);
    const auto kind = static_cast<SectionKind>(static_cast<unsigned char>(bytes[r.at++]));
    const std::uint32_t name_len = r.get_le<std::uint32_t>();
    const std::string name = r.get_string(name_len);
    switch (kind) {
      case kU64:
        c.u64s[name] = r.get_le<std::uint64_t>();
        break;
      case kString: {
        const std::uint64_t len = r.get_le<std::uint64_t>();
        c.strings[name] = r.get_string(len);
        break;
      }
      case kTensor:
        c.tensors[name] = get_tensor(r);
        break;
      case kTensorMap: {
        const std::uint32_t entries = r.get_le<std::uint32_t>();
        auto& m = c.tensor_maps[name];
        for (std::uint32_t e = 0; e < entries; ++e) {
          const std::uint32_t klen = r.get_le<std::uint32_t>();
          const std::string key = r.get_string(klen);
          m[key] = get_tensor(r);
        }
        break;
      }
      case kIntList: {
        const std::uint64_t entries = r.get_le<std::uint64_t>();
        auto& list = c.int_lists[name];
        for (std::uint64_t e = 0; e < entries; ++e) list.push_back(r.get_le<std::int64_t>());
        break;
      }
      default:
        r.bad("unknown section kind " + std::to_string(static_cast<int>(kind)));
    }
  }
  if (r.at != bytes.size()) r.bad("trailing bytes after the last section");
  return c;
}

// ---- checkpoint ----

namespace {

const std::string kTypeTag[kNumCellTypes] = {"normal", "reduce"};

std::uint64_t require_u64(const Container& c, const std::string& name, const std::string& path) {
  const auto it = c.u64s.find(name);
  if (it == c.u64s.end()) fail(ErrorKind::Format, path + ": missing section '" + name + "'");
  return it->second;
}

const std::string& require_string(const Container& c, const std::string& name, const std::string& path) {
  const auto it = c.strings.find(name);
  if (it == c.strings.end()) fail(ErrorKind::Format, path + ": missing section '" + name + "'");
  return it->second;
}

const std::vector<std::int64_t>& require_ints(const Container& c, const std::string& name, const std::string& path) {
  const auto it = c.int_lists.find(name);
  if (it == c.int_lists.end()) fail(ErrorKind::Format, path + ": missing section '" + name + "'");
  return it->second;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  Container c;
  c.strings["config_json"] = ck.config_json;
  c.u64s["seed"] = ck.seed;
  c.strings["rng_state"] = ck.rng_state;
  c.int_lists["spec"] = {ck.spec.cells, ck.spec.channels, ck.spec.num_nodes,
                         ck.spec.classes, ck.spec.image_hw, ck.spec.batch};
  std::vector<std::int64_t> groups;
  groups.push_back(static_cast<std::int64_t>(ck.groups.size()));
  for (const EdgeGroup& g : ck.groups) {
    groups.push_back(g.k);
    groups.push_back(static_cast<std::int64_t>(g.edges.size()));
    for (int e : g.edges) groups.push_back(e);
  }
  c.int_lists["groups"] = std::move(groups);
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (!ck.arch.has(type)) continue;
    c.tensors["alpha." + kTypeTag[type]] = ck.arch.alpha[type];
    c.tensors["beta." + kTypeTag[type]] = ck.arch.beta[type];
  }
  c.tensor_maps["params"] = ck.params;
  c.tensor_maps["buffers"] = ck.buffers;
  Tensor norm({2, 3});
  for (int ch = 0; ch < 3; ++ch) {
    norm[static_cast<std::size_t>(ch)] = ck.norm.mean[ch];
    norm[static_cast<std::size_t>(3 + ch)] = ck.norm.stddev[ch];
  }
  c.tensors["normalizer"] = norm;
  c.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const Container c = Container::load(path);
  Checkpoint ck;
  ck.config_json = require_string(c, "config_json", path);
  ck.seed = require_u64(c, "seed", path);
  ck.rng_state = require_string(c, "rng_state", path);
  const auto& spec = require_ints(c, "spec", path);
  if (spec.size() != 6) fail(ErrorKind::Format, path + ": spec section must hold 6 values");
  ck.spec.cells = static_cast<int>(spec[0]);
  ck.spec.channels = static_cast<int>(spec[1]);
  ck.spec.num_nodes = static_cast<int>(spec[2]);
  ck.spec.classes = static_cast<int>(spec[3]);
  ck.spec.image_hw = static_cast<int>(spec[4]);
  ck.spec.batch = static_cast<int>(spec[5]);
  const auto& groups = require_ints(c, "groups", path);
  std::size_t at = 0;
  auto next = [&]() -> std::int64_t {
    if (at >= groups.size()) fail(ErrorKind::Format, path + ": groups section truncated");
    return groups[at++];
  };
  const std::int64_t ngroups = next();
  for (std::int64_t g = 0; g < ngroups; ++g) {
    EdgeGroup grp;
    grp.k = static_cast<int>(next());
    const std::int64_t edges = next();
    for (std::int64_t e = 0; e < edges; ++e) grp.edges.push_back(static_cast<int>(next()));
    ck.groups.push_back(std::move(grp));
  }
  if (at != groups.size()) fail(ErrorKind::Format, path + ": trailing values in groups section");
  for (int type = 0; type < kNumCellTypes; ++type) {
    const auto a = c.tensors.find("alpha." + kTypeTag[type]);
    const auto b = c.tensors.find("beta." + kTypeTag[type]);
    if ((a == c.tensors.end()) != (b == c.tensors.end()))
      fail(ErrorKind::Format, path + ": alpha/beta sections must appear in pairs");
    if (a == c.tensors.end()) continue;
    ck.arch.alpha[type] = a->second;
    ck.arch.beta[type] = b->second;
  }
  if (!ck.arch.has(kNormal)) fail(ErrorKind::Format, path + ": missing section 'alpha.normal'");
  const auto params = c.tensor_maps.find("params");
  const auto buffers = c.tensor_maps.find("buffers");
  if (params == c.tensor_maps.end()) fail(ErrorKind::Format, path + ": missing section 'params'");
  if (buffers == c.tensor_maps.end()) fail(ErrorKind::Format, path + ": missing section 'buffers'");
  ck.params = params->second;
  ck.buffers = buffers->second;
  const auto norm = c.tensors.find("normalizer");
  if (norm == c.tensors.end() || norm->second.size() != 6)
    fail(ErrorKind::Format, path + ": missing or malformed 'normalizer' section");
  for (int ch = 0; ch < 3; ++ch) {
    ck.norm.mean[ch] = norm->second[static_cast<std::size_t>(ch)];
    ck.norm.stddev[ch] = norm->second[static_cast<std::size_t>(3 + ch)];
  }
  return ck;
}

// ---- dataset archive ----

void save_dataset(const Dataset& ds, const std::string& path) {
  Container c;
  c.u64s["classes"] = static_cast<std::uint64_t>(ds.classes);
  c.tensors["images"] = ds.images;
  c.int_lists["labels"] = std::vector<std::int64_t>(ds.labels.begin(), ds.labels.end());
  c.save(path);
}

Dataset load_dataset_archive(const std::string& path) {
  const Container c = Container::load(path);
  Dataset ds;
  ds.classes = static_cast<int>(require_u64(c, "classes", path));
  const auto images = c.tensors.find("images");
  if (images == c.tensors.end()) fail(ErrorKind::Format, path + ": missing section 'images'");
  ds.images = images->second;
  if (ds.images.rank() != 4) fail(ErrorKind::Format, path + ": images must be a rank-4 tensor");
  const auto& labels = require_ints(c, "labels", path);
  ds.labels.assign(labels.begin(), labels.end());
  if (static_cast<int>(ds.labels.size()) != ds.images.extent(0))
    fail(ErrorKind::Format, path + ": label count does not match the image count");
  for (int label : ds.labels)
    if (label < 0 || label >= ds.classes) fail(ErrorKind::Format, path + ": label outside class range");
  return ds;
}

}  // namespace entnas
