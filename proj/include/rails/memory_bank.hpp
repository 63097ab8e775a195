#pragma once

// Persisted moderate-affinity synthetic examples ("memory data").
//
// Bank file: "RAILSMEM", u32 count, u32 d, then per entry u32 label and d f32
// values, little-endian. Provenance lives in a JSON sidecar (<path>.json), an
// array of {query_id, layer, generation} objects in entry order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rails/binary_io.hpp"
#include "rails/error.hpp"
#include "rails/numerics.hpp"

namespace rails {

struct Provenance {
  std::uint64_t query_id = 0;
  int layer = 0;
  int generation = 0;

  bool operator==(const Provenance&) const = default;
};

struct MemoryEntry {
  FeatureVector x;
  int label = 0;
  Provenance origin;

  bool operator==(const MemoryEntry&) const = default;
};

class MemoryBank {
 public:
  MemoryBank() = default;
  explicit MemoryBank(std::optional<std::size_t> capacity) : capacity_(capacity) {}

  // Values are stored at single precision, the resolution of the bank file.
  void push(MemoryEntry e) {
    detail::require_dims(entries_.empty() || e.x.size() == dim(), "memory entry dimension mismatch");
    if (e.label < 0) throw DataError("memory entry has negative label");
    for (double& v : e.x) v = static_cast<double>(static_cast<float>(v));
    entries_.push_back(std::move(e));
    if (capacity_ && entries_.size() > *capacity_)
      entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(entries_.size() - *capacity_));
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().x.size(); }
  std::optional<std::size_t> capacity() const { return capacity_; }
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  const MemoryEntry& operator[](std::size_t i) const { return entries_[i]; }

  bool operator==(const MemoryBank& o) const { return entries_ == o.entries_; }

 private:
  std::vector<MemoryEntry> entries_;
  std::optional<std::size_t> capacity_;
};

inline constexpr std::string_view kBankMagic = "RAILSMEM";

inline std::filesystem::path bank_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

inline std::vector<char> serialize_bank(const MemoryBank& bank) {
  detail::ByteWriter w;
  w.bytes(kBankMagic);
  w.u32_le(static_cast<std::uint32_t>(bank.size()));
  w.u32_le(static_cast<std::uint32_t>(bank.dim()));
  for (const auto& e : bank.entries()) {
    w.u32_le(static_cast<std::uint32_t>(e.label));
    for (double v : e.x) w.f32_le(static_cast<float>(v));
  }
  return w.data();
}

inline std::string serialize_provenance(const MemoryBank& bank) {
  auto arr = nlohmann::json::array();
  for (const auto& e : bank.entries())
    arr.push_back({{"query_id", e.origin.query_id}, {"layer", e.origin.layer}, {"generation", e.origin.generation}});
  return arr.dump(1) + "\n";
}

inline void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  detail::write_file(path, serialize_bank(bank));
  const auto json = serialize_provenance(bank);
  detail::write_file(bank_sidecar(path), std::vector<char>(json.begin(), json.end()));
}

inline MemoryBank parse_bank(detail::ByteReader in, const nlohmann::json& provenance,
                             std::optional<std::size_t> capacity = std::nullopt) {
  if (in.bytes(kBankMagic.size()) != kBankMagic) throw FormatError(in.source() + ": bad magic, not a RAILSMEM file");
  const std::uint32_t count = in.u32_le();
  const std::uint32_t d = in.u32_le();
  if (std::uint64_t{count} * (4 + std::uint64_t{d} * 4) != in.remaining())
    throw FormatError(in.source() + ": size does not match header (" + std::to_string(count) + " entries of dimension " +
                      std::to_string(d) + ", " + std::to_string(in.remaining()) + " payload bytes)");
  if (!provenance.is_array() || provenance.size() != count)
    throw ValidationError(in.source() + ": provenance sidecar does not list one record per entry");
  MemoryBank bank(capacity);
  for (std::uint32_t i = 0; i < count; ++i) {
    MemoryEntry e;
    e.label = static_cast<int>(in.u32_le());
    e.x.resize(d);
    for (auto& v : e.x) v = in.f32_le();
    if (!in_unit_box(e.x)) throw ValidationError(in.source() + ": entry " + std::to_string(i) + " leaves [0,1]");
    const auto& rec = provenance[i];
    try {
      e.origin = {rec.at("query_id").get<std::uint64_t>(), rec.at("layer").get<int>(), rec.at("generation").get<int>()};
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(in.source() + ": provenance record " + std::to_string(i) + ": " + ex.what());
    }
    bank.push(std::move(e));
  }
  return bank;
}

inline MemoryBank load_bank(const std::filesystem::path& path, std::optional<std::size_t> capacity = std::nullopt) {
  auto in = detail::ByteReader::from_file(path);
  const auto side = detail::ByteReader::from_file(bank_sidecar(path));
  nlohmann::json prov;
  try {
    prov = nlohmann::json::parse(side.bytes_view());
  } catch (const nlohmann::json::parse_error& ex) {
    throw FormatError(bank_sidecar(path).string() + ": " + ex.what());
  }
  return parse_bank(std::move(in), prov, capacity);
}

}  // namespace rails
