// SPDX-License-Identifier: Apache-2.0
//
// Binary container for checkpoints and datasets.
//
//   "AFDC"                      4 bytes
//   version                     u32
//   tensor count                u32
//   per tensor:  name (u32 length + bytes), rank u32, dims u64 x rank,
//                payload f64 x prod(dims)
//   metadata count              u32
//   per entry:   key, value (u32 length + bytes each)
//
// All integers and floats are little-endian. Loading a container with a
// different version is an error.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "afd/tensor.hpp"

namespace afd {

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> metadata;

  void add(std::string name, const Tensor& t);
  bool has(const std::string& name) const;
  /// Throws CheckpointMismatch when absent.
  const Tensor& tensor(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
};

std::vector<std::uint8_t> serialize(const Container& c);
Container deserialize(std::span<const std::uint8_t> bytes);

void save_container(const Container& c, const std::filesystem::path& path);
Container load_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// FNV-1a over the bytes, printed as a dataset checksum.
std::uint64_t checksum(std::span<const std::uint8_t> bytes);

}  // namespace afd
