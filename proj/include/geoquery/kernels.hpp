// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Data-parallel inner loops. Each kernel exists twice: `serial::` is the
// reference implementation kept for testing, `parallel::` is the OpenMP
// version the library calls. Both produce bit-identical results for any
// thread count: every score is computed by the same `dot`, and top-k
// selection uses a strict total order (score desc, id asc).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace geoquery::kernels {

/// Dot product of float32 inputs with eight float64 accumulators.
inline double dot(const float* a, const float* b, std::size_t n) noexcept {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

/// A scored row. `id` orders ties: lower id wins.
struct Scored {
  double score;
  std::uint32_t id;
};

inline bool better(const Scored& a, const Scored& b) noexcept {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

/// Bounded selection of the k best Scored values under `better`.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  std::size_t capacity() const noexcept { return k_; }
  std::size_t size() const noexcept { return heap_.size(); }
  bool full() const noexcept { return heap_.size() >= k_; }
  /// Worst retained element; only meaningful when non-empty.
  const Scored& worst() const noexcept { return heap_.front(); }

  void push(const Scored& s) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.push_back(s);
      std::push_heap(heap_.begin(), heap_.end(), better);
    } else if (better(s, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better);
      heap_.back() = s;
      std::push_heap(heap_.begin(), heap_.end(), better);
    }
  }

  void merge(const TopK& other) {
    for (const auto& s : other.heap_) push(s);
  }

  /// Best-first; leaves the accumulator empty.
  std::vector<Scored> take_sorted() {
    std::sort(heap_.begin(), heap_.end(), better);
    return std::exchange(heap_, {});
  }

 private:
  std::size_t k_;
  std::vector<Scored> heap_;  // heap under `better`: front is the worst
};

/// Contiguous block of rows [begin, end) of a row-major matrix.
struct RowRange {
  std::size_t begin;
  std::size_t end;
};

/// Optional per-row season filter: rows whose tag != `want` are skipped.
struct RowFilter {
  const std::uint8_t* tags = nullptr;
  std::uint8_t want = 0;

  bool accepts(std::size_t row) const noexcept { return tags == nullptr || tags[row] == want; }
};

/// Index pairs into a vector list.
using OrdinalPair = std::pair<std::uint32_t, std::uint32_t>;

namespace serial {

/// Scores `query` against every row in `ranges`, pushing (score, ids[row]).
void scan_topk(const float* query, const float* matrix, std::size_t dim,
               const std::uint32_t* ids, std::span<const RowRange> ranges, const RowFilter& filter,
               TopK& acc);

/// For each point, the index of the centroid with the largest dot product
/// (ties to the lower index) and that dot product.
void nearest_centroid(const float* points, std::size_t n, const float* centroids, std::size_t k,
                      std::size_t dim, std::uint32_t* labels, double* sims);

/// 1 - cosine for each pair, clamped to [0, 2]. Vectors must be non-zero.
void pair_cosine_distances(std::span<const float* const> vectors, std::size_t dim,
                           std::span<const OrdinalPair> pairs, double* out);

}  // namespace serial

namespace parallel {

void scan_topk(const float* query, const float* matrix, std::size_t dim,
               const std::uint32_t* ids, std::span<const RowRange> ranges, const RowFilter& filter,
               TopK& acc);

void nearest_centroid(const float* points, std::size_t n, const float* centroids, std::size_t k,
                      std::size_t dim, std::uint32_t* labels, double* sims);

void pair_cosine_distances(std::span<const float* const> vectors, std::size_t dim,
                           std::span<const OrdinalPair> pairs, double* out);

}  // namespace parallel

/// Thread control for the parallel kernels (no-ops without OpenMP).
int max_threads() noexcept;
void set_threads(int n) noexcept;
bool openmp_enabled() noexcept;

}  // namespace geoquery::kernels
