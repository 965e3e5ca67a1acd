// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "geoquery/embedding.hpp"
#include "geoquery/geo.hpp"
#include "geoquery/kernels.hpp"

namespace geoquery {

struct IndexEntry {
  TileKey key;
  EmbeddingVector vector;
};

struct Neighbour {
  TileKey key;
  double score;  // cosine similarity

  friend bool operator==(const Neighbour&, const Neighbour&) = default;
};

struct IndexParams {
  enum class Backend : std::uint32_t { Exact = 0, PrunedClusters = 1 };

  Backend backend = Backend::Exact;
  /// PrunedClusters only. Defaults: ceil(sqrt(N)) and ceil(sqrt(n_clusters)).
  std::optional<std::uint32_t> n_clusters;
  std::optional<std::uint32_t> n_probe;
  /// After the n_probe nearest clusters, keep scanning any cluster whose
  /// angular upper bound can still beat the current k-th score. With this
  /// set the pruned backend returns the exact top-k.
  bool bounded_probe = true;
  std::uint64_t seed = 0x5eed;
  std::uint32_t max_iterations = 25;
};

/// Immutable k-nearest-neighbour index over L2-normalised float32 vectors.
/// Results are ordered by score descending, ties by TileKey ascending.
class Index {
 public:
  using Backend = IndexParams::Backend;

  /// Throws InputError (empty), DimensionError, DuplicateKeyError,
  /// DegenerateVectorError.
  static Index build(std::vector<IndexEntry> entries, const IndexParams& params = {});

  /// Bulk form used by streaming ingestion: `matrix` is row-major,
  /// keys.size() x dim, raw (un-normalised) values.
  static Index build(std::vector<TileKey> keys, std::vector<float> matrix, std::size_t dim,
                     const IndexParams& params = {});

  /// Reads a GQIX file. Throws FormatError (with byte offset) or VersionError.
  static Index load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return keys_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  Backend backend() const noexcept { return backend_; }
  std::uint32_t n_clusters() const noexcept { return static_cast<std::uint32_t>(cluster_ranges_.size()); }
  std::uint32_t n_probe() const noexcept { return n_probe_; }
  bool bounded_probe() const noexcept { return bounded_; }

  /// All keys, ascending.
  std::span<const TileKey> keys() const noexcept { return keys_; }
  bool contains(const TileKey& key) const;
  /// Stored (normalised) vector for `key`, or empty span if absent.
  std::span<const float> vector_of(const TileKey& key) const;

  /// Normalises `query` first. Throws DimensionError, DegenerateVectorError,
  /// InputError (k == 0).
  std::vector<Neighbour> knn(const EmbeddingVector& query, std::size_t k,
                             std::optional<Season> season = std::nullopt) const;

  /// Same, for a query already of unit norm (e.g. a stored vector).
  std::vector<Neighbour> knn_unit(std::span<const float> query, std::size_t k,
                                  std::optional<Season> season = std::nullopt) const;

 private:
  Index() = default;

  void index_rows(std::vector<float> normalised, const std::vector<std::uint32_t>* labels);
  void train_clusters(const std::vector<float>& normalised, const IndexParams& params,
                      std::vector<std::uint32_t>& labels);
  std::optional<std::size_t> rank_of(const TileKey& key) const;

  std::size_t dim_ = 0;
  Backend backend_ = Backend::Exact;
  std::uint32_t n_probe_ = 0;
  bool bounded_ = true;

  std::vector<TileKey> keys_;            // ascending; position == rank
  std::vector<float> matrix_;            // rows in storage order
  std::vector<std::uint32_t> row_rank_;  // storage row -> rank
  std::vector<std::uint32_t> rank_row_;  // rank -> storage row
  std::vector<std::uint8_t> row_season_;

  std::vector<float> centroids_;                // n_clusters x dim, unit norm
  std::vector<kernels::RowRange> cluster_ranges_;
  std::vector<double> cluster_min_sim_;         // min member-centroid similarity
  std::vector<std::uint32_t> rank_label_;       // rank -> cluster
};

}  // namespace geoquery
