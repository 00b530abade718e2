#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qops/tensor.hpp"

namespace qops {

// Binary model container. Layout, all integers little-endian u32:
//   "QOPS" | version | 4-byte section tag | config length | config bytes
//   | tensor count | per tensor: name length, name, ndims, dims..., f64 data.
// Config bytes are "key=value\n" lines. Doubles are raw IEEE-754 LE, so a
// save/load round trip is bit exact.
struct Checkpoint {
  std::string section;                      // 4 chars, e.g. "SEQ2"
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Missing key or unparsable value throws std::runtime_error naming the key.
const std::string& config_get(const Checkpoint& ckpt, const std::string& key);
std::size_t config_get_size(const Checkpoint& ckpt, const std::string& key);
double config_get_double(const Checkpoint& ckpt, const std::string& key);

std::string join_list(const std::vector<std::string>& items);
std::vector<std::string> split_list(const std::string& packed);

}  // namespace qops
