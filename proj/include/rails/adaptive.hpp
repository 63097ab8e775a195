#pragma once

// Single-stage adaptive learning: bank memory data from processed queries and
// fold it into the reference data once.

#include "rails/dataset.hpp"
#include "rails/maturation.hpp"
#include "rails/memory_bank.hpp"

namespace rails {

// Appends every layer's memory members with provenance; the bank evicts its
// oldest entries beyond capacity.
inline void absorb(MemoryBank& bank, const MaturationResult& result) {
  for (const auto& layer : result.layers)
    for (const auto& m : layer.memory) bank.push({m.x, m.label, {result.query_id, layer.layer, layer.final_generation}});
}

// Training data followed by the bank entries as ordinary labeled examples.
// Original examples keep their positions and labels.
inline Dataset harden(const Dataset& data, const MemoryBank& bank) {
  detail::require_dims(bank.empty() || data.empty() || bank.dim() == data.dim(),
                       "memory bank dimension " + std::to_string(bank.dim()) + " does not match dataset dimension " +
                           std::to_string(data.dim()));
  auto examples = data.examples();
  examples.reserve(data.size() + bank.size());
  for (const auto& e : bank.entries()) examples.push_back({e.x, e.label});
  return Dataset(std::move(examples), data.class_count());
}

}  // namespace rails
