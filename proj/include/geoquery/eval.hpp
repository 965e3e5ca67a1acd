// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Disaster-geolocation evaluation: a query succeeds at radius r when one of
// its top-n ranked tiles has its centre within r km of the ground truth.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoquery/geo.hpp"
#include "geoquery/search.hpp"
#include "json.hpp"

namespace geoquery {

enum class DisasterCategory { UK_Floods, US_Wildfires, US_Droughts, Other };

/// Identifier form, e.g. "UK_Floods".
std::string_view to_string(DisasterCategory c);
/// Report form, e.g. "UK Floods".
std::string_view display_name(DisasterCategory c);
std::optional<DisasterCategory> parse_category(std::string_view s);

struct DisasterQuery {
  std::string id;
  std::string query_text;
  GeoPoint truth;
  DisasterCategory category;
};

struct QueryOutcome {
  std::string query_id;
  DisasterCategory category = DisasterCategory::Other;
  double best_distance_km = 0;
  bool hit_50 = false;
  bool hit_100 = false;
  double search_time_s = 0;
  /// Failed queries carry the error and are excluded from means.
  std::optional<std::string> error_code;
  std::string message;
};

inline constexpr double kNearRadiusKm = 50.0;
inline constexpr double kFarRadiusKm = 100.0;
inline constexpr std::size_t kDefaultTopN = 10;

/// Category label used for per-config summary rows.
inline constexpr std::string_view kOverallLabel = "Overall";

struct EvalRow {
  std::string config;
  std::string category;  // display name or "Overall"
  std::size_t n_queries = 0;  // scored (non-errored) outcomes
  std::size_t n_errors = 0;
  double mean_distance_km = 0;
  double median_distance_km = 0;
  double pct_within_50 = 0;
  double pct_within_100 = 0;
  double mean_search_time_s = 0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  std::size_t top_n = kDefaultTopN;
  std::vector<EvalRow> rows;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct ConfigOutcomes {
  SearchConfig config;
  std::vector<QueryOutcome> outcomes;
};

/// Reads a JSON array (or {"queries": [...]}) of
/// {"id","query_text","lat","lon","category"}. Errors carry the line of the
/// offending record.
std::vector<DisasterQuery> load_queries(const std::filesystem::path& path);
void save_queries(const std::filesystem::path& path, const std::vector<DisasterQuery>& queries);

/// Throws EmptyResultError when `result` has no tiles.
QueryOutcome score_query(const QueryResult& result, const GeoPoint& truth, const GridSpec& grid,
                         std::size_t top_n = kDefaultTopN);

/// Runs every (config, query) through two_stage_query and scores it.
std::vector<ConfigOutcomes> run_queries(const std::vector<DisasterQuery>& queries,
                                        const std::vector<SearchConfig>& configs,
                                        const SearchEngine& engine, const GridSpec& grid,
                                        std::size_t top_n = kDefaultTopN, int threads = 1);

/// Per (config, category) rows, then one Overall row per config.
EvalReport aggregate(const std::vector<ConfigOutcomes>& runs, std::size_t top_n = kDefaultTopN);

EvalReport run_ablation(const std::vector<DisasterQuery>& queries,
                        const std::vector<SearchConfig>& configs, const SearchEngine& engine,
                        const GridSpec& grid, std::size_t top_n = kDefaultTopN, int threads = 1);

/// Percentage of (trial, truth) draws where a uniformly random tile lies
/// within 50 km of the truth point.
double random_baseline(const std::vector<TileId>& tiles, const std::vector<GeoPoint>& truths,
                       std::size_t n_trials, std::uint64_t seed, const GridSpec& grid = GridSpec());

enum class ReportStyle { Markdown, Csv, Json };
std::optional<ReportStyle> parse_report_style(std::string_view s);

/// Markdown and CSV carry the published column set; `extended` appends
/// median distance, query and error counts. JSON always carries every field.
std::string format_report(const EvalReport& report, ReportStyle style, bool extended = false);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const QueryOutcome& o);
QueryOutcome outcome_from_json(const nlohmann::json& j);

}  // namespace geoquery
