// SPDX-License-Identifier: Apache-2.0
#include "s2st/archive.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "s2st/config.hpp"

namespace s2st {

namespace {

constexpr std::array<char, 8> kMagic = {'S', '2', 'S', 'T', 'A', 'R', 'R', '1'};
constexpr std::uint8_t kFloat64 = 0;
constexpr std::uint8_t kInt64 = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw std::runtime_error("archive: truncated file " + path.string());
  }
  return value;
}

}  // namespace

void ArrayArchive::put(const std::string& name, Tensor tensor) { entries_[name] = std::move(tensor); }

void ArrayArchive::put_ints(const std::string& name, std::vector<std::int64_t> values) {
  entries_[name] = std::move(values);
}

const Tensor& ArrayArchive::tensor(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<Tensor>(it->second)) {
    throw std::runtime_error("archive: no float array named '" + name + "'");
  }
  return std::get<Tensor>(it->second);
}

const std::vector<std::int64_t>& ArrayArchive::ints(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<std::vector<std::int64_t>>(it->second)) {
    throw std::runtime_error("archive: no integer array named '" + name + "'");
  }
  return std::get<std::vector<std::int64_t>>(it->second);
}

std::vector<std::string> ArrayArchive::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

void ArrayArchive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("archive: cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_pod(out, static_cast<std::uint64_t>(entries_.size()));
  for (const auto& [name, entry] : entries_) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    if (const auto* t = std::get_if<Tensor>(&entry)) {
      write_pod(out, kFloat64);
      write_pod(out, static_cast<std::uint32_t>(t->rank()));
      for (std::size_t d : t->shape()) write_pod(out, static_cast<std::uint64_t>(d));
      out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    } else {
      const auto& ints = std::get<std::vector<std::int64_t>>(entry);
      write_pod(out, kInt64);
      write_pod(out, std::uint32_t{1});
      write_pod(out, static_cast<std::uint64_t>(ints.size()));
      out.write(reinterpret_cast<const char*>(ints.data()),
                static_cast<std::streamsize>(ints.size() * sizeof(std::int64_t)));
    }
  }
  if (!out) throw std::runtime_error("archive: write failed for " + path.string());
}

ArrayArchive ArrayArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("archive: cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("archive: bad magic in " + path.string());
  }
  ArrayArchive archive;
  const auto count = read_pod<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw std::runtime_error("archive: truncated name in " + path.string());
    const auto dtype = read_pod<std::uint8_t>(in, path);
    const auto rank = read_pod<std::uint32_t>(in, path);
    Shape shape;
    std::size_t count_values = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in, path)));
      count_values *= shape.back();
    }
    if (dtype == kFloat64) {
      std::vector<double> values(count_values);
      if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count_values * sizeof(double)))) {
        throw std::runtime_error("archive: truncated data for '" + name + "' in " + path.string());
      }
      archive.put(name, Tensor(std::move(shape), std::move(values)));
    } else if (dtype == kInt64) {
      std::vector<std::int64_t> values(count_values);
      if (!in.read(reinterpret_cast<char*>(values.data()),
                   static_cast<std::streamsize>(count_values * sizeof(std::int64_t)))) {
        throw std::runtime_error("archive: truncated data for '" + name + "' in " + path.string());
      }
      archive.put_ints(name, std::move(values));
    } else {
      throw std::runtime_error("archive: unknown dtype in " + path.string());
    }
  }
  return archive;
}

std::filesystem::path sidecar_path(const std::filesystem::path& archive_path) {
  return std::filesystem::path(archive_path.string() + ".meta.txt");
}

void write_metadata(const std::filesystem::path& path, const Metadata& metadata) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metadata: cannot write " + path.string());
  out << format_entries(metadata);
}

Metadata read_metadata(const std::filesystem::path& path) { return read_config_file(path); }

const std::string& require_key(const Metadata& metadata, const std::string& key, const std::string& source) {
  const auto it = metadata.find(key);
  if (it == metadata.end()) throw std::runtime_error(source + ": missing metadata key '" + key + "'");
  return it->second;
}

}  // namespace s2st
