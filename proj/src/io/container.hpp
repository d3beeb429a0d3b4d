#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "data/data.hpp"
#include "regularizers/regularizers.hpp"

namespace entnas {

// Little-endian binary container of named sections. Values are stored as
// 64-bit floats regardless of the build's `real`, so files are portable
// across builds and platforms. Layout per file:
//   "ENTNASBC" | u32 version | u32 section count | sections...
// section: u8 kind | u32 name length | name | payload
//   kind 0 (u64):      u64
//   kind 1 (string):   u64 length | bytes
//   kind 2 (tensor):   u32 rank | i32 dims | f64 data
//   kind 3 (tensor map): u32 count | (name, tensor)...
//   kind 4 (int list): u64 count | i64 values
struct Container {
  std::map<std::string, std::uint64_t> u64s;
  std::map<std::string, std::string> strings;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::map<std::string, Tensor>> tensor_maps;
  std::map<std::string, std::vector<std::int64_t>> int_lists;

  void save(const std::string& path) const;
  static Container load(const std::string& path);  // io/format errors name the offset
};

// ---- checkpoint payload ----

struct Checkpoint {
  std::string config_json;  // resolved run configuration
  std::uint64_t seed = 0;
  std::string rng_state;    // all random streams derive from the master seed
  NetworkSpec spec;
  std::vector<EdgeGroup> groups;
  ArchParams arch;
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> buffers;
  Normalizer norm;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ---- dataset archive (same container framing) ----

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset_archive(const std::string& path);

}  // namespace entnas
