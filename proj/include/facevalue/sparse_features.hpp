#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "facevalue/errors.hpp"

namespace facevalue {

/// Binary feature vector stored as its sorted set of active indices.
///
/// Invariants: indices unique and strictly increasing, every index < dim,
/// at least one index active (callers always include a bias feature).
class SparseFeatures {
 public:
  SparseFeatures() = default;

  SparseFeatures(std::vector<std::size_t> active, std::size_t dim)
      : active_(std::move(active)), dim_(dim) {
    std::sort(active_.begin(), active_.end());
    if (active_.empty()) throw contract_error("SparseFeatures: no active index");
    if (std::adjacent_find(active_.begin(), active_.end()) != active_.end())
      throw contract_error("SparseFeatures: duplicate index");
    if (active_.back() >= dim_)
      throw contract_error("SparseFeatures: index " + std::to_string(active_.back()) +
                           " out of range for dim " + std::to_string(dim_));
  }

  const std::vector<std::size_t>& active() const noexcept { return active_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return active_.size(); }
  bool contains(std::size_t i) const { return std::binary_search(active_.begin(), active_.end(), i); }

  friend bool operator==(const SparseFeatures&, const SparseFeatures&) = default;

 private:
  std::vector<std::size_t> active_;
  std::size_t dim_ = 0;
};

}  // namespace facevalue
