// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "s2st/tensor.hpp"

namespace s2st {

/// Named-array archive: an ordered set of float64 tensors and int64 vectors
/// stored in a small binary container ("S2STARR1"). Values are written as raw
/// little-endian bytes, so a save/load round trip is bit-exact.
class ArrayArchive {
 public:
  void put(const std::string& name, Tensor tensor);
  void put_ints(const std::string& name, std::vector<std::int64_t> values);

  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& tensor(const std::string& name) const;
  const std::vector<std::int64_t>& ints(const std::string& name) const;
  std::vector<std::string> names() const;

  void save(const std::filesystem::path& path) const;
  static ArrayArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::variant<Tensor, std::vector<std::int64_t>>> entries_;
};

/// Text sidecar of key=value pairs stored next to an archive.
using Metadata = std::map<std::string, std::string>;

std::filesystem::path sidecar_path(const std::filesystem::path& archive_path);
void write_metadata(const std::filesystem::path& path, const Metadata& metadata);
Metadata read_metadata(const std::filesystem::path& path);

/// Looks up a required metadata key; throws std::runtime_error naming the file when absent.
const std::string& require_key(const Metadata& metadata, const std::string& key, const std::string& source);

}  // namespace s2st
