#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracle.hpp"
#include "rails/adaptive.hpp"

using namespace rails;
namespace fs = std::filesystem;

namespace {

MaturationResult fake_result(std::uint64_t query, std::size_t per_layer, int layers, std::size_t d = 4) {
  MaturationResult r;
  r.query_id = query;
  for (int l = 0; l < layers; ++l) {
    LayerMaturation lm;
    lm.layer = l;
    lm.final_generation = 7;
    for (std::size_t i = 0; i < per_layer; ++i)
      lm.memory.push_back({FeatureVector(d, static_cast<double>(i % 10) / 10.0), static_cast<int>(i % 3), -1.0});
    r.layers.push_back(std::move(lm));
  }
  return r;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "rails_test_adaptive";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

MemoryBank sample_bank() {
  MemoryBank bank;
  auto rng = derive_stream(5, 0, Purpose::synth);
  for (std::uint64_t q = 0; q < 6; ++q)
    bank.push({oracle::random_point(rng, 5), static_cast<int>(q % 3), {q, static_cast<int>(q % 2), 10 + static_cast<int>(q)}});
  return bank;
}

}  // namespace

TEST(Absorb, AddsEveryLayersMemory) {
  MemoryBank bank;
  absorb(bank, fake_result(3, 250, 1));
  EXPECT_EQ(bank.size(), 250u);
  absorb(bank, fake_result(4, 10, 3));
  EXPECT_EQ(bank.size(), 280u);
  EXPECT_EQ(bank[0].origin.query_id, 3u);
  EXPECT_EQ(bank[250].origin.query_id, 4u);
  EXPECT_EQ(bank[279].origin.layer, 2);
  EXPECT_EQ(bank[279].origin.generation, 7);
}

TEST(Absorb, CapacityKeepsNewestEntries) {
  MemoryBank bank(100);
  for (std::uint64_t q = 0; q < 5; ++q) absorb(bank, fake_result(q, 30, 1));
  ASSERT_EQ(bank.size(), 100u);
  EXPECT_EQ(bank[0].origin.query_id, 1u);  // 150 total, the first 50 evicted
  EXPECT_EQ(bank[99].origin.query_id, 4u);
}

TEST(Harden, EmptyBankLeavesDataUnchanged) {
  auto rng = derive_stream(6, 0, Purpose::synth);
  const auto data = oracle::random_dataset(rng, 20, 4, 3);
  const auto out = harden(data, MemoryBank{});
  EXPECT_EQ(out.examples(), data.examples());
}

TEST(Harden, AppendsBankAfterOriginals) {
  auto rng = derive_stream(7, 0, Purpose::synth);
  const auto data = oracle::random_dataset(rng, 20, 4, 3);
  MemoryBank bank;
  absorb(bank, fake_result(1, 12, 2));
  const auto out = harden(data, bank);
  ASSERT_EQ(out.size(), 44u);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(out[i], data[i]);
  for (std::size_t j = 0; j < bank.size(); ++j) {
    EXPECT_EQ(out[20 + j].x, bank[j].x);
    EXPECT_EQ(out[20 + j].label, bank[j].label);
  }
}

TEST(Harden, DimensionMismatchIsAnError) {
  auto rng = derive_stream(8, 0, Purpose::synth);
  const auto data = oracle::random_dataset(rng, 20, 4, 3);
  MemoryBank bank;
  absorb(bank, fake_result(1, 3, 1, 5));
  EXPECT_THROW(harden(data, bank), DimensionError);
}

TEST(BankFile, RoundTripIsExact) {
  const auto bank = sample_bank();
  const auto path = temp_path("bank.bin");
  save_bank(bank, path);
  const auto back = load_bank(path);
  EXPECT_EQ(back, bank);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_EQ(back[i].origin.query_id, bank[i].origin.query_id);
    EXPECT_EQ(back[i].origin.generation, bank[i].origin.generation);
  }
  const auto again = temp_path("bank2.bin");
  save_bank(back, again);
  EXPECT_EQ(slurp(path), slurp(again));
  EXPECT_EQ(slurp(bank_sidecar(path)), slurp(bank_sidecar(again)));
}

TEST(BankFile, Layout) {
  MemoryBank bank;
  bank.push({{0.5, 1.0}, 2, {0, 0, 0}});
  const auto bytes = serialize_bank(bank);
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "RAILSMEM");
  EXPECT_EQ(bytes[8], 1);   // count
  EXPECT_EQ(bytes[12], 2);  // dimension
  EXPECT_EQ(bytes[16], 2);  // label
}

TEST(BankFile, RejectsBadMagic) {
  const auto path = temp_path("magic.bin");
  save_bank(sample_bank(), path);
  auto bytes = slurp(path);
  bytes[0] = 'X';
  spit(path, bytes);
  EXPECT_THROW(load_bank(path), FormatError);
}

TEST(BankFile, RejectsTruncation) {
  const auto path = temp_path("trunc.bin");
  save_bank(sample_bank(), path);
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 3);
  spit(path, bytes);
  EXPECT_THROW(load_bank(path), FormatError);
}

TEST(BankFile, RejectsValuesOutsideTheBox) {
  const auto path = temp_path("box.bin");
  save_bank(sample_bank(), path);
  auto bytes = slurp(path);
  const float bad = 2.0f;
  std::memcpy(bytes.data() + 20, &bad, 4);  // first value of the first entry
  spit(path, bytes);
  EXPECT_THROW(load_bank(path), ValidationError);
}

TEST(BankFile, RejectsMismatchedSidecar) {
  const auto path = temp_path("side.bin");
  save_bank(sample_bank(), path);
  spit(bank_sidecar(path), {'[', ']'});
  EXPECT_THROW(load_bank(path), ValidationError);
  spit(bank_sidecar(path), {'[', '{'});
  EXPECT_THROW(load_bank(path), FormatError);
}

TEST(BankFile, MissingFileIsADataError) { EXPECT_THROW(load_bank(temp_path("absent.bin")), DataError); }
