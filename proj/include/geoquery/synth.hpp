// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Planted-cluster synthetic world. Each cluster is a disk of tiles on the
// globe sharing a visual prototype and a word vocabulary, so cluster
// membership is known ground truth for retrieval.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geoquery/corpus.hpp"
#include "geoquery/eval.hpp"
#include "geoquery/index.hpp"

namespace geoquery {

struct SynthParams {
  std::size_t tiles = 1000;
  std::size_t clusters = 5;
  std::size_t seasons = 4;  // 1..4, one visual entry per tile per season
  std::size_t dim = 64;
  std::size_t text_dim = 256;
  std::uint64_t seed = 0;
  std::uint64_t text_seed = 0;
  /// Proxy subset size; 0 means 5% of entries (at least one per cluster).
  std::size_t proxy = 0;
  std::size_t queries_per_cluster = 5;
  /// Norm of the per-entry visual noise and of the per-season offset.
  double noise = 0.5;
  double season_spread = 0.25;
  /// Graded-noise alignment fixtures.
  std::size_t alignment_keys = 200;
  /// Alignment keys are drawn from the proxies of the first this-many clusters.
  std::size_t alignment_clusters = 2;
  std::vector<double> noise_levels = {0.0, 0.2, 0.4, 0.6, 0.8};

  /// Throws InputError on degenerate parameters.
  void validate() const;
  std::size_t entries() const noexcept { return tiles * seasons; }
};

struct SynthCluster {
  std::uint32_t id = 0;
  std::string theme;
  std::vector<std::string> vocabulary;
  GeoPoint centre{0.0, 0.0};
  double radius_km = 0;
  std::size_t tiles = 0;
  DisasterCategory category = DisasterCategory::Other;
};

struct SynthWorld {
  SynthParams params;
  GridSpec grid;
  std::vector<SynthCluster> clusters;
  std::vector<TileKey> keys;               // ascending
  std::vector<float> visual;               // keys.size() x dim, un-normalised
  std::vector<std::uint32_t> key_cluster;  // parallel to keys
  ProviderConfig text_provider;
  std::vector<ProxyRecord> proxy;          // ascending by key
  std::vector<DisasterQuery> queries;
  std::vector<std::uint32_t> query_cluster;
  std::vector<TileKey> alignment_keys;
  std::vector<PromptCandidate> prompts;    // one per noise level, ascending noise
  std::map<std::string, DescribeOracle::Table> prompt_descriptions;

  /// Cluster of `key`, or -1 when absent.
  std::int64_t cluster_of(const TileKey& key) const;
  /// Distinct tile ids, ascending.
  std::vector<TileId> tile_ids() const;
  std::vector<EmbeddingVector> visual_vectors(const std::vector<TileKey>& subset) const;
};

/// Deterministic in `params`.
SynthWorld generate_world(const SynthParams& params);

/// Visual index over every entry of the world.
Index build_visual_index(const SynthWorld& world, const IndexParams& params = {});

struct SynthOutput {
  bool write_manifest = true;
  IndexParams index;
};

/// Writes manifest.ndjson, visual.gqix, proxy.ndjson, proxy_keys.json,
/// descriptions.json, queries.json, membership.json, and alignment/
/// {keys.json, prompts.json, descr/<prompt id>.json} under `dir`.
void write_world(const SynthWorld& world, const std::filesystem::path& dir, const SynthOutput& out = {});

}  // namespace geoquery
