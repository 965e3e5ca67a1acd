// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoquery/corpus.hpp"
#include "geoquery/embedding.hpp"
#include "geoquery/index.hpp"
#include "json.hpp"

namespace geoquery {

struct SearchConfig {
  std::string name;
  std::size_t k_text = 0;
  std::size_t k_image = 0;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

/// The four evaluated presets, in their canonical order.
const std::vector<SearchConfig>& preset_configs();

/// A preset by name, or "custom:KT:KI". Throws ConfigError listing the
/// valid names otherwise.
SearchConfig resolve_config(std::string_view name);

struct RankedTile {
  TileKey key;
  double score;  // anchor_text_sim * visual_sim
  TileKey anchor;
  double anchor_text_sim;
  double visual_sim;
};

struct QueryResult {
  std::string query_text;
  SearchConfig config;
  std::vector<RankedTile> results;  // score desc, key asc; keys unique
  double stage1_ms = 0;
  double stage2_ms = 0;
  double total_ms = 0;
};

struct QueryOptions {
  /// Restrict stage-2 neighbours to one season.
  std::optional<Season> season;
};

/// Read-only view over loaded corpora; cheap to copy, safe to share.
struct SearchEngine {
  const ProxyCorpus* proxy = nullptr;
  const Index* visual = nullptr;
  ProviderConfig provider;
};

/// Stage 1: embed the query and take the k_text nearest proxies. Stage 2:
/// for each anchor, the k_image nearest visual tiles to the anchor's own
/// visual vector. Candidates with visual_sim <= 0 are dropped; scores are
/// fused as anchor_text_sim * visual_sim, keeping the best per tile.
/// Throws NotReadyError, ProviderUnavailable, DimensionError, InputError.
QueryResult two_stage_query(std::string_view query_text, const SearchConfig& config,
                            const SearchEngine& engine, const QueryOptions& options = {});

/// Stage 2 and fusion only, from already-resolved anchors (text similarity
/// per anchor). Exposed for evaluation and testing.
std::vector<RankedTile> fuse_anchors(const std::vector<Neighbour>& anchors, std::size_t k_image,
                                     const Index& visual, std::optional<Season> season = std::nullopt);

/// Nearest neighbours of a stored tile, excluding the tile itself.
/// Throws NotFoundError for an unknown key.
std::vector<Neighbour> similar_by_tile(const TileKey& key, std::size_t k, const Index& visual);

nlohmann::json to_json(const SearchConfig& c);
nlohmann::json to_json(const RankedTile& t);
nlohmann::json to_json(const QueryResult& r);
nlohmann::json to_json(const Neighbour& n);

}  // namespace geoquery
