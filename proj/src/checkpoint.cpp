#include "qops/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace qops {
namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.section.size() != 4)
    throw std::invalid_argument("checkpoint section tag must be 4 characters, got '" +
                                ckpt.section + "'");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

  out.write("QOPS", 4);
  write_u32(out, kCheckpointVersion);
  out.write(ckpt.section.data(), 4);

  std::string config;
  for (const auto& [key, value] : ckpt.config) {
    if (key.find('=') != std::string::npos || key.find('\n') != std::string::npos)
      throw std::invalid_argument("checkpoint config key contains '=' or newline: " + key);
    if (value.find('\n') != std::string::npos)
      throw std::invalid_argument("checkpoint config value for '" + key + "' contains newline");
    config += key;
    config += '=';
    config += value;
    config += '\n';
  }
  write_u32(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = tensor.shape();
    write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) write_f64(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "QOPS", 4) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' is not a QOPS file");
  std::uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  char section[4];
  if (!in.read(section, 4)) throw std::runtime_error("checkpoint: truncated section tag");
  ckpt.section.assign(section, 4);

  std::uint32_t config_len = read_u32(in, "config length");
  std::string config(config_len, '\0');
  if (config_len && !in.read(config.data(), config_len))
    throw std::runtime_error("checkpoint: truncated config block");
  std::size_t pos = 0;
  while (pos < config.size()) {
    std::size_t nl = config.find('\n', pos);
    if (nl == std::string::npos)
      throw std::runtime_error("checkpoint: config block not newline terminated");
    std::string line = config.substr(pos, nl - pos);
    pos = nl + 1;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("checkpoint: config line without '=': " + line);
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
  }

  std::uint32_t count = read_u32(in, "tensor count");
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_u32(in, "tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated tensor name");
    std::uint32_t ndims = read_u32(in, "tensor rank");
    std::vector<std::size_t> shape(ndims);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = read_u32(in, "tensor dim");
      total *= d;
    }
    std::vector<double> data(total);
    for (auto& v : data) v = read_f64(in, "tensor '" + name + "' data");
    ckpt.tensors.emplace_back(name, Tensor::from_data(shape, std::move(data), true));
  }
  return ckpt;
}

const std::string& config_get(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.config.find(key);
  if (it == ckpt.config.end())
    throw std::runtime_error("checkpoint: missing config key '" + key + "'");
  return it->second;
}

std::size_t config_get_size(const Checkpoint& ckpt, const std::string& key) {
  const std::string& raw = config_get(ckpt, key);
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: config key '" + key + "' is not an integer: " + raw);
  }
}

double config_get_double(const Checkpoint& ckpt, const std::string& key) {
  const std::string& raw = config_get(ckpt, key);
  try {
    std::size_t used = 0;
    double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: config key '" + key + "' is not a number: " + raw);
  }
}

std::string join_list(const std::vector<std::string>& items) {
  nlohmann::json j = items;
  return j.dump();
}

std::vector<std::string> split_list(const std::string& packed) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(packed);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: malformed list value: ") + e.what());
  }
  if (!j.is_array()) throw std::runtime_error("checkpoint: list value is not an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_string()) throw std::runtime_error("checkpoint: list entry is not a string");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace qops
