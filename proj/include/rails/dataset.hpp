#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rails/error.hpp"
#include "rails/numerics.hpp"

namespace rails {

struct LabeledExample {
  FeatureVector x;
  int label = 0;

  bool operator==(const LabeledExample&) const = default;
};

// Labeled examples with a per-class index. The index partitions the examples
// and is rebuilt on every append.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<LabeledExample> examples, int class_count) : examples_(std::move(examples)), classes_(class_count) {
    detail::require_config(class_count >= 1, "Dataset: class count must be positive");
    rebuild_index();
  }

  void append(LabeledExample ex) {
    check_example(ex, examples_.size());
    by_class_[static_cast<std::size_t>(ex.label)].push_back(examples_.size());
    examples_.push_back(std::move(ex));
  }

  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  int class_count() const { return classes_; }
  std::size_t dim() const { return examples_.empty() ? 0 : examples_.front().x.size(); }

  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<LabeledExample>& examples() const { return examples_; }

  // Indices of class c in ascending order.
  const std::vector<std::size_t>& class_indices(int c) const { return by_class_.at(static_cast<std::size_t>(c)); }
  std::size_t class_size(int c) const { return class_indices(c).size(); }

  // Subset by index list, preserving the given order.
  Dataset subset(const std::vector<std::size_t>& idx) const {
    std::vector<LabeledExample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(examples_.at(i));
    return Dataset(std::move(out), classes_);
  }

 private:
  void check_example(const LabeledExample& ex, std::size_t pos) const {
    if (ex.label < 0 || ex.label >= classes_)
      throw DataError("Dataset: example " + std::to_string(pos) + " has label " + std::to_string(ex.label) +
                      " outside [0, " + std::to_string(classes_) + ")");
    if (!examples_.empty() && ex.x.size() != examples_.front().x.size())
      throw DimensionError("Dataset: example " + std::to_string(pos) + " has dimension " +
                           std::to_string(ex.x.size()) + ", expected " + std::to_string(examples_.front().x.size()));
  }

  void rebuild_index() {
    by_class_.assign(static_cast<std::size_t>(classes_), {});
    for (std::size_t i = 0; i < examples_.size(); ++i) {
      check_example(examples_[i], i);
      by_class_[static_cast<std::size_t>(examples_[i].label)].push_back(i);
    }
  }

  std::vector<LabeledExample> examples_;
  int classes_ = 0;
  std::vector<std::vector<std::size_t>> by_class_;
};

}  // namespace rails
