#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "driftcast/common.hpp"

namespace driftcast {

struct CountEntry {
  std::size_t col = 0;
  std::int64_t count = 0;

  friend bool operator==(const CountEntry&, const CountEntry&) = default;
};

/// One sparse bag-of-words row with its declared width (vocabulary size).
struct WordVector {
  std::size_t width = 0;
  std::vector<CountEntry> entries;  // sorted by col, no duplicates

  std::int64_t total() const {
    std::int64_t s = 0;
    for (const auto& e : entries) s += e.count;
    return s;
  }

  static WordVector from_counts(std::size_t width, const std::map<std::size_t, std::int64_t>& counts) {
    WordVector v{width, {}};
    v.entries.reserve(counts.size());
    for (const auto& [col, c] : counts) {
      if (c > 0) v.entries.push_back({col, c});
    }
    return v;
  }

  friend bool operator==(const WordVector&, const WordVector&) = default;
};

/// Nonnegative integer count matrix in compressed-row form.
class SparseCountMatrix {
 public:
  struct Triplet {
    std::size_t row, col;
    std::int64_t count;
  };

  SparseCountMatrix() = default;
  explicit SparseCountMatrix(std::size_t cols) : cols_(cols) {}

  /// Appends a row given as column ids (duplicates are aggregated).
  std::size_t append_row(std::span<const std::size_t> cols) {
    std::map<std::size_t, std::int64_t> counts;
    for (auto c : cols) ++counts[c];
    return append_row(counts);
  }

  std::size_t append_row(const std::map<std::size_t, std::int64_t>& counts) {
    for (const auto& [col, c] : counts) {
      if (col >= cols_) throw Error("column " + std::to_string(col) + " out of range");
      if (c < 0) throw Error("negative count");
      if (c > 0) entries_.push_back({col, c});
    }
    row_ptr_.push_back(entries_.size());
    return row_ptr_.size() - 2;
  }

  /// Builds from (row, col, count) triplets; duplicate pairs are summed.
  static SparseCountMatrix from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::pair(a.row, a.col) < std::pair(b.row, b.col);
    });
    SparseCountMatrix m(cols);
    std::size_t k = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      std::map<std::size_t, std::int64_t> counts;
      for (; k < triplets.size() && triplets[k].row == r; ++k) counts[triplets[k].col] += triplets[k].count;
      m.append_row(counts);
    }
    if (k != triplets.size()) throw Error("triplet row index out of range");
    return m;
  }

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return entries_.size(); }

  std::span<const CountEntry> row(std::size_t i) const {
    if (i >= rows()) throw Error("row " + std::to_string(i) + " out of range");
    return {entries_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  WordVector row_vector(std::size_t i) const {
    auto r = row(i);
    return {cols_, {r.begin(), r.end()}};
  }

  std::int64_t at(std::size_t i, std::size_t j) const {
    auto r = row(i);
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const CountEntry& e, std::size_t c) { return e.col < c; });
    return (it != r.end() && it->col == j) ? it->count : 0;
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(entries_.size());
    for (std::size_t i = 0; i < rows(); ++i)
      for (const auto& e : row(i)) out.push_back({i, e.col, e.count});
    return out;
  }

  friend bool operator==(const SparseCountMatrix& a, const SparseCountMatrix& b) {
    return a.cols_ == b.cols_ && a.row_ptr_ == b.row_ptr_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<CountEntry> entries_;
};

}  // namespace driftcast
