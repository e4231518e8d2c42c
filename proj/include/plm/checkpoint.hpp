#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "plm/tensor.hpp"

namespace plm {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Versioned binary container:
///
///   "PLM1" | u32 version | u32 config_bytes | config ("key=value\n" lines)
///   | u32 record_count | records...
///
/// record = u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[]
/// All integers and floats are little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> config;
  NamedTensors tensors;

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over names, shapes, and raw value bytes.
std::uint64_t tensor_checksum(const NamedTensors& tensors);

}  // namespace plm
