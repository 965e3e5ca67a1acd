// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "geoquery/error.hpp"
#include "geoquery/random.hpp"

namespace geoquery {

static_assert(std::endian::native == std::endian::little, "GQIX I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'Q', 'I', 'X'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 40;
constexpr std::size_t kKeyBytes = 12;
constexpr std::size_t kTrainPointsPerCluster = 40;
// float storage perturbs similarities by ~1e-7; keep the bound conservative
constexpr double kBoundSlack = 1e-6;

std::uint32_t ceil_sqrt(std::size_t n) {
  auto r = static_cast<std::uint32_t>(std::sqrt(static_cast<double>(n)));
  while (static_cast<std::size_t>(r) * r < n) ++r;
  while (r > 1 && static_cast<std::size_t>(r - 1) * (r - 1) >= n) --r;
  return std::max<std::uint32_t>(r, 1);
}

/// Upper bound on dot(q, x) for unit x within angle acos(min_sim) of a unit
/// centroid whose similarity to q is `centroid_sim`.
double similarity_bound(double centroid_sim, double min_sim) {
  const double to_centroid = std::acos(std::clamp(centroid_sim, -1.0, 1.0));
  const double radius = std::acos(std::clamp(min_sim, -1.0, 1.0));
  if (to_centroid <= radius) return 1.0;
  return std::cos(to_centroid - radius);
}

struct Header {
  std::uint32_t version;
  std::uint32_t dim;
  std::uint32_t backend;
  std::uint64_t count;
  std::uint32_t n_clusters;
  std::uint32_t n_probe;
  std::uint32_t flags;
};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

Index Index::build(std::vector<IndexEntry> entries, const IndexParams& params) {
  if (entries.empty()) throw InputError("cannot build an index from zero entries");
  const std::size_t dim = entries.front().vector.dim();
  std::vector<TileKey> keys;
  std::vector<float> matrix;
  keys.reserve(entries.size());
  matrix.reserve(entries.size() * dim);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.vector.dim() != dim) {
      throw DimensionError("entry " + std::to_string(i) + " has dim " +
                           std::to_string(e.vector.dim()) + ", expected " + std::to_string(dim));
    }
    keys.push_back(e.key);
    matrix.insert(matrix.end(), e.vector.values().begin(), e.vector.values().end());
  }
  entries.clear();
  return build(std::move(keys), std::move(matrix), dim, params);
}

Index Index::build(std::vector<TileKey> keys, std::vector<float> matrix, std::size_t dim,
                   const IndexParams& params) {
  if (keys.empty()) throw InputError("cannot build an index from zero entries");
  if (dim == 0 || matrix.size() != keys.size() * dim) {
    throw DimensionError("matrix size does not match keys x dim");
  }
  if (keys.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError("index size exceeds 2^32 entries");
  }
  if (params.n_clusters && *params.n_clusters == 0) throw InputError("n_clusters must be positive");
  if (params.n_probe && *params.n_probe == 0) throw InputError("n_probe must be positive");

  const std::size_t n = keys.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&keys](auto a, auto b) { return keys[a] < keys[b]; });
  for (std::size_t r = 1; r < n; ++r) {
    if (keys[order[r]] == keys[order[r - 1]]) {
      throw DuplicateKeyError("duplicate key " + to_string(keys[order[r]]));
    }
  }

  Index idx;
  idx.dim_ = dim;
  idx.backend_ = params.backend;
  idx.bounded_ = params.bounded_probe;
  idx.keys_.resize(n);
  std::vector<float> normalised(n * dim);
  for (std::size_t r = 0; r < n; ++r) {
    idx.keys_[r] = keys[order[r]];
    const float* src = matrix.data() + std::size_t{order[r]} * dim;
    float* dst = normalised.data() + r * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      if (!std::isfinite(src[d])) throw InputError("non-finite component in " + to_string(idx.keys_[r]));
      dst[d] = src[d];
    }
    try {
      l2_normalize_inplace({dst, dim});
    } catch (const DegenerateVectorError&) {
      throw DegenerateVectorError("zero vector for " + to_string(idx.keys_[r]));
    }
  }
  matrix.clear();
  matrix.shrink_to_fit();
  keys.clear();

  if (params.backend == Backend::Exact) {
    idx.index_rows(std::move(normalised), nullptr);
  } else {
    std::vector<std::uint32_t> labels;
    idx.train_clusters(normalised, params, labels);
    idx.index_rows(std::move(normalised), &labels);
  }
  return idx;
}

void Index::train_clusters(const std::vector<float>& normalised, const IndexParams& params,
                           std::vector<std::uint32_t>& labels) {
  const std::size_t n = keys_.size();
  const std::uint32_t requested = params.n_clusters.value_or(ceil_sqrt(n));
  const std::uint32_t probe = params.n_probe.value_or(ceil_sqrt(requested));
  if (probe > requested) throw InputError("n_probe must not exceed n_clusters");
  const auto c = static_cast<std::uint32_t>(std::min<std::size_t>(requested, n));
  n_probe_ = std::min(probe, c);

  auto rng = rnd::make_engine(params.seed);

  // training subset (sorted ranks), then c distinct initial centroids from it
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  const std::size_t n_train = std::min<std::size_t>(n, std::size_t{c} * kTrainPointsPerCluster);
  for (std::size_t i = 0; i < n_train && n_train < n; ++i) {
    std::swap(pool[i], pool[i + rnd::below(rng, n - i)]);
  }
  pool.resize(n_train);
  std::sort(pool.begin(), pool.end());
  std::vector<float> train(n_train * dim_);
  for (std::size_t i = 0; i < n_train; ++i) {
    std::copy_n(normalised.data() + std::size_t{pool[i]} * dim_, dim_, train.data() + i * dim_);
  }

  std::vector<std::uint32_t> pick(n_train);
  std::iota(pick.begin(), pick.end(), 0u);
  for (std::size_t i = 0; i < c; ++i) std::swap(pick[i], pick[i + rnd::below(rng, n_train - i)]);
  centroids_.assign(std::size_t{c} * dim_, 0.0f);
  for (std::size_t i = 0; i < c; ++i) {
    std::copy_n(train.data() + std::size_t{pick[i]} * dim_, dim_, centroids_.data() + i * dim_);
  }

  std::vector<std::uint32_t> assign(n_train), previous;
  std::vector<double> sims(n_train);
  std::vector<double> sums(std::size_t{c} * dim_);
  std::vector<std::size_t> counts(c);
  for (std::uint32_t it = 0; it < params.max_iterations; ++it) {
    kernels::parallel::nearest_centroid(train.data(), n_train, centroids_.data(), c, dim_,
                                        assign.data(), sims.data());
    if (assign == previous) break;
    previous = assign;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n_train; ++i) {
      const float* p = train.data() + i * dim_;
      double* s = sums.data() + std::size_t{assign[i]} * dim_;
      for (std::size_t d = 0; d < dim_; ++d) s[d] += p[d];
      ++counts[assign[i]];
    }
    // empty clusters are re-seeded from the worst-fitting training points
    std::vector<std::uint32_t> worst;
    for (std::uint32_t k = 0; k < c; ++k) {
      float* cent = centroids_.data() + std::size_t{k} * dim_;
      if (counts[k] == 0) {
        if (worst.empty()) {
          worst.resize(n_train);
          std::iota(worst.begin(), worst.end(), 0u);
          std::sort(worst.begin(), worst.end(), [&sims](auto a, auto b) {
            return sims[a] < sims[b] || (sims[a] == sims[b] && a < b);
          });
          std::reverse(worst.begin(), worst.end());
        }
        std::copy_n(train.data() + std::size_t{worst.back()} * dim_, dim_, cent);
        worst.pop_back();
        continue;
      }
      const double* s = sums.data() + std::size_t{k} * dim_;
      double sq = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) sq += s[d] * s[d];
      if (sq == 0.0) continue;
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t d = 0; d < dim_; ++d) cent[d] = static_cast<float>(s[d] * inv);
    }
  }

  labels.resize(n);
  std::vector<double> all_sims(n);
  kernels::parallel::nearest_centroid(normalised.data(), n, centroids_.data(), c, dim_,
                                      labels.data(), all_sims.data());
}

void Index::index_rows(std::vector<float> normalised, const std::vector<std::uint32_t>* labels) {
  const std::size_t n = keys_.size();
  row_rank_.resize(n);
  rank_row_.resize(n);
  cluster_ranges_.clear();
  cluster_min_sim_.clear();
  rank_label_.clear();

  if (labels == nullptr) {
    matrix_ = std::move(normalised);
    std::iota(row_rank_.begin(), row_rank_.end(), 0u);
    std::iota(rank_row_.begin(), rank_row_.end(), 0u);
  } else {
    const std::size_t c = centroids_.size() / dim_;
    std::vector<std::size_t> start(c + 1, 0);
    for (auto l : *labels) ++start[l + 1];
    std::partial_sum(start.begin(), start.end(), start.begin());
    cluster_ranges_.resize(c);
    for (std::size_t k = 0; k < c; ++k) cluster_ranges_[k] = {start[k], start[k + 1]};

    matrix_.resize(n * dim_);
    auto cursor = start;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t row = cursor[(*labels)[r]]++;
      row_rank_[row] = static_cast<std::uint32_t>(r);
      rank_row_[r] = static_cast<std::uint32_t>(row);
      std::copy_n(normalised.data() + r * dim_, dim_, matrix_.data() + row * dim_);
    }
    rank_label_ = *labels;

    cluster_min_sim_.assign(c, 1.0);
    for (std::size_t k = 0; k < c; ++k) {
      const float* cent = centroids_.data() + k * dim_;
      for (std::size_t row = cluster_ranges_[k].begin; row < cluster_ranges_[k].end; ++row) {
        cluster_min_sim_[k] = std::min(cluster_min_sim_[k], kernels::dot(cent, matrix_.data() + row * dim_, dim_));
      }
    }
  }

  row_season_.resize(n);
  for (std::size_t row = 0; row < n; ++row) {
    row_season_[row] = static_cast<std::uint8_t>(keys_[row_rank_[row]].season);
  }
}

std::optional<std::size_t> Index::rank_of(const TileKey& key) const {
  auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it == keys_.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - keys_.begin());
}

bool Index::contains(const TileKey& key) const { return rank_of(key).has_value(); }

std::span<const float> Index::vector_of(const TileKey& key) const {
  const auto rank = rank_of(key);
  if (!rank) return {};
  return {matrix_.data() + std::size_t{rank_row_[*rank]} * dim_, dim_};
}

std::vector<Neighbour> Index::knn(const EmbeddingVector& query, std::size_t k,
                                  std::optional<Season> season) const {
  if (query.dim() != dim_) {
    throw DimensionError("query dim " + std::to_string(query.dim()) + " != index dim " +
                         std::to_string(dim_));
  }
  std::vector<float> q(query.values().begin(), query.values().end());
  l2_normalize_inplace(q);
  return knn_unit(q, k, season);
}

std::vector<Neighbour> Index::knn_unit(std::span<const float> query, std::size_t k,
                                       std::optional<Season> season) const {
  if (query.size() != dim_) {
    throw DimensionError("query dim " + std::to_string(query.size()) + " != index dim " +
                         std::to_string(dim_));
  }
  if (k == 0) throw InputError("k must be positive");

  kernels::TopK acc(std::min(k, keys_.size()));
  kernels::RowFilter filter;
  if (season) filter = {row_season_.data(), static_cast<std::uint8_t>(*season)};

  if (backend_ == Backend::Exact) {
    const kernels::RowRange all{0, keys_.size()};
    kernels::parallel::scan_topk(query.data(), matrix_.data(), dim_, row_rank_.data(), {&all, 1},
                                 filter, acc);
  } else {
    const std::size_t c = cluster_ranges_.size();
    std::vector<kernels::Scored> order(c);
    for (std::size_t i = 0; i < c; ++i) {
      order[i] = {kernels::dot(query.data(), centroids_.data() + i * dim_, dim_),
                  static_cast<std::uint32_t>(i)};
    }
    std::sort(order.begin(), order.end(), kernels::better);

    std::vector<kernels::RowRange> probed;
    for (std::size_t i = 0; i < n_probe_; ++i) probed.push_back(cluster_ranges_[order[i].id]);
    kernels::parallel::scan_topk(query.data(), matrix_.data(), dim_, row_rank_.data(), probed,
                                 filter, acc);
    if (bounded_) {
      for (std::size_t i = n_probe_; i < c; ++i) {
        const auto cl = order[i].id;
        const auto& range = cluster_ranges_[cl];
        if (range.begin == range.end) continue;
        if (acc.full() &&
            similarity_bound(order[i].score, cluster_min_sim_[cl]) + kBoundSlack < acc.worst().score) {
          continue;
        }
        kernels::serial::scan_topk(query.data(), matrix_.data(), dim_, row_rank_.data(), {&range, 1},
                                   filter, acc);
      }
    }
  }

  std::vector<Neighbour> out;
  for (const auto& s : acc.take_sorted()) out.push_back({keys_[s.id], s.score});
  return out;
}

void Index::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(backend_));
  put<std::uint64_t>(out, keys_.size());
  put<std::uint32_t>(out, n_clusters());
  put<std::uint32_t>(out, n_probe_);
  put<std::uint32_t>(out, bounded_ ? 1u : 0u);
  put<std::uint32_t>(out, 0u);
  for (const auto& k : keys_) {
    put<std::uint32_t>(out, k.tile.col);
    put<std::uint32_t>(out, k.tile.row);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(k.season));
  }
  for (std::size_t r = 0; r < keys_.size(); ++r) {
    out.write(reinterpret_cast<const char*>(matrix_.data() + std::size_t{rank_row_[r]} * dim_),
              static_cast<std::streamsize>(dim_ * sizeof(float)));
  }
  if (backend_ == Backend::PrunedClusters) {
    out.write(reinterpret_cast<const char*>(centroids_.data()),
              static_cast<std::streamsize>(centroids_.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(rank_label_.data()),
              static_cast<std::streamsize>(rank_label_.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw InputError("write to '" + path.string() + "' failed");
}

Index Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw InputError("cannot stat '" + path.string() + "'");

  if (file_size < kHeaderBytes) throw FormatError("truncated GQIX header", file_size);
  char head[kHeaderBytes];
  in.read(head, kHeaderBytes);
  if (std::memcmp(head, kMagic, 4) != 0) throw FormatError("bad magic, not a GQIX file", 0);
  Header h{get<std::uint32_t>(head + 4),  get<std::uint32_t>(head + 8),
           get<std::uint32_t>(head + 12), get<std::uint64_t>(head + 16),
           get<std::uint32_t>(head + 24), get<std::uint32_t>(head + 28),
           get<std::uint32_t>(head + 32)};
  if (h.version != kFormatVersion) {
    throw VersionError("GQIX version " + std::to_string(h.version) + " unsupported (expected " +
                       std::to_string(kFormatVersion) + ")");
  }
  if (h.dim == 0) throw FormatError("dim is zero", 8);
  if (h.backend > 1) throw FormatError("unknown backend", 12);
  if (h.count == 0 || h.count > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("invalid entry count", 16);
  }
  const bool pruned = h.backend == static_cast<std::uint32_t>(Backend::PrunedClusters);
  if (pruned && (h.n_clusters == 0 || h.n_clusters > h.count)) throw FormatError("invalid n_clusters", 24);
  if (!pruned && h.n_clusters != 0) throw FormatError("exact index with clusters", 24);
  if (pruned && (h.n_probe == 0 || h.n_probe > h.n_clusters)) throw FormatError("invalid n_probe", 28);

  const std::uint64_t keys_at = kHeaderBytes;
  const std::uint64_t vectors_at = keys_at + h.count * kKeyBytes;
  const std::uint64_t centroids_at = vectors_at + h.count * h.dim * sizeof(float);
  const std::uint64_t labels_at = centroids_at + (pruned ? std::uint64_t{h.n_clusters} * h.dim * sizeof(float) : 0);
  const std::uint64_t expected = labels_at + (pruned ? h.count * sizeof(std::uint32_t) : 0);
  if (file_size != expected) {
    throw FormatError("payload length disagrees with header (file " + std::to_string(file_size) +
                          " bytes, header implies " + std::to_string(expected) + ")",
                      std::min(file_size, expected));
  }

  Index idx;
  idx.dim_ = h.dim;
  idx.backend_ = static_cast<Backend>(h.backend);
  idx.n_probe_ = h.n_probe;
  idx.bounded_ = (h.flags & 1u) != 0;

  std::vector<char> raw(h.count * kKeyBytes);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  idx.keys_.resize(h.count);
  for (std::size_t i = 0; i < h.count; ++i) {
    const char* p = raw.data() + i * kKeyBytes;
    const auto season = get<std::uint32_t>(p + 8);
    const auto offset = keys_at + i * kKeyBytes;
    if (season >= kSeasonCount) throw FormatError("invalid season tag", offset + 8);
    idx.keys_[i] = TileKey{{get<std::uint32_t>(p), get<std::uint32_t>(p + 4)}, static_cast<Season>(season)};
    if (i > 0 && !(idx.keys_[i - 1] < idx.keys_[i])) throw FormatError("keys not strictly ascending", offset);
  }

  std::vector<float> normalised(h.count * h.dim);
  in.read(reinterpret_cast<char*>(normalised.data()),
          static_cast<std::streamsize>(normalised.size() * sizeof(float)));
  for (std::size_t r = 0; r < h.count; ++r) {
    const float* v = normalised.data() + r * h.dim;
    for (std::size_t d = 0; d < h.dim; ++d) {
      if (!std::isfinite(v[d])) throw FormatError("non-finite vector component", vectors_at + (r * h.dim + d) * 4);
    }
    if (std::abs(kernels::dot(v, v, h.dim) - 1.0) > 2e-5) {
      throw FormatError("stored vector is not unit norm", vectors_at + r * h.dim * 4);
    }
  }

  std::vector<std::uint32_t> labels;
  if (pruned) {
    idx.centroids_.resize(std::size_t{h.n_clusters} * h.dim);
    in.read(reinterpret_cast<char*>(idx.centroids_.data()),
            static_cast<std::streamsize>(idx.centroids_.size() * sizeof(float)));
    for (std::size_t i = 0; i < idx.centroids_.size(); ++i) {
      if (!std::isfinite(idx.centroids_[i])) throw FormatError("non-finite centroid", centroids_at + i * 4);
    }
    labels.resize(h.count);
    in.read(reinterpret_cast<char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(std::uint32_t)));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= h.n_clusters) throw FormatError("cluster label out of range", labels_at + i * 4);
    }
  }
  if (!in) throw FormatError("short read", file_size);

  idx.index_rows(std::move(normalised), pruned ? &labels : nullptr);
  return idx;
}

}  // namespace geoquery
