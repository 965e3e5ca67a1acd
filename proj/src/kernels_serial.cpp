// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoquery/kernels.hpp"

namespace geoquery::kernels::serial {

void scan_topk(const float* query, const float* matrix, std::size_t dim,
               const std::uint32_t* ids, std::span<const RowRange> ranges, const RowFilter& filter,
               TopK& acc) {
  for (const auto& r : ranges) {
    for (std::size_t row = r.begin; row < r.end; ++row) {
      if (!filter.accepts(row)) continue;
      acc.push(Scored{dot(query, matrix + row * dim, dim), ids[row]});
    }
  }
}

void nearest_centroid(const float* points, std::size_t n, const float* centroids, std::size_t k,
                      std::size_t dim, std::uint32_t* labels, double* sims) {
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = points + i * dim;
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double s = dot(p, centroids + c * dim, dim);
      if (s > best) {
        best = s;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    labels[i] = arg;
    sims[i] = best;
  }
}

void pair_cosine_distances(std::span<const float* const> vectors, std::size_t dim,
                           std::span<const OrdinalPair> pairs, double* out) {
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const float* a = vectors[pairs[p].first];
    const float* b = vectors[pairs[p].second];
    const double c = dot(a, b, dim) / (std::sqrt(dot(a, a, dim)) * std::sqrt(dot(b, b, dim)));
    out[p] = 1.0 - std::clamp(c, -1.0, 1.0);
  }
}

}  // namespace geoquery::kernels::serial
