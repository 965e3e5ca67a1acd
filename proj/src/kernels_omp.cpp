// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "geoquery/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace geoquery::kernels {

namespace {
// below this many scored rows the fork/join costs more than it saves
constexpr std::size_t kMinParallelRows = 16384;
}  // namespace

namespace parallel {

void scan_topk(const float* query, const float* matrix, std::size_t dim,
               const std::uint32_t* ids, std::span<const RowRange> ranges, const RowFilter& filter,
               TopK& acc) {
  std::size_t total = 0;
  for (const auto& r : ranges) total += r.end - r.begin;
  if (total < kMinParallelRows || max_threads() == 1) {
    serial::scan_topk(query, matrix, dim, ids, ranges, filter, acc);
    return;
  }

  // split every range into fixed-size chunks so work balances across threads
  constexpr std::size_t kChunk = 4096;
  std::vector<RowRange> chunks;
  chunks.reserve(total / kChunk + ranges.size());
  for (const auto& r : ranges) {
    for (std::size_t b = r.begin; b < r.end; b += kChunk) chunks.push_back({b, std::min(r.end, b + kChunk)});
  }

  const auto k = acc.capacity();
#pragma omp parallel
  {
    TopK local(k);
#pragma omp for schedule(dynamic, 1) nowait
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks.size()); ++c) {
      for (std::size_t row = chunks[c].begin; row < chunks[c].end; ++row) {
        if (!filter.accepts(row)) continue;
        local.push(Scored{dot(query, matrix + row * dim, dim), ids[row]});
      }
    }
#pragma omp critical(geoquery_topk_merge)
    acc.merge(local);
  }
}

void nearest_centroid(const float* points, std::size_t n, const float* centroids, std::size_t k,
                      std::size_t dim, std::uint32_t* labels, double* sims) {
  constexpr std::size_t kBlock = 256;
  const auto blocks = static_cast<std::ptrdiff_t>((n + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (n * k >= kMinParallelRows)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * kBlock;
    const std::size_t end = std::min(n, begin + kBlock);
    serial::nearest_centroid(points + begin * dim, end - begin, centroids, k, dim, labels + begin,
                             sims + begin);
  }
}

void pair_cosine_distances(std::span<const float* const> vectors, std::size_t dim,
                           std::span<const OrdinalPair> pairs, double* out) {
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static) if (pairs.size() >= 4096)
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    serial::pair_cosine_distances(vectors, dim, pairs.subspan(static_cast<std::size_t>(p), 1), out + p);
  }
}

}  // namespace parallel

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) noexcept {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

bool openmp_enabled() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace geoquery::kernels
