// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "geoquery/error.hpp"
#include "geoquery/random.hpp"
#include "json_util.hpp"

namespace geoquery {

using detail::json;

namespace {

constexpr DisasterCategory kReportOrder[] = {DisasterCategory::UK_Floods, DisasterCategory::US_Droughts,
                                             DisasterCategory::US_Wildfires, DisasterCategory::Other};

/// Line of each record-opening brace at `depth` (1 for a root array,
/// 2 for {"queries": [...]}).
std::vector<std::size_t> record_lines(const std::string& text, int depth) {
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  int d = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') ++line;
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') {
      if (c == '{' && d == depth) lines.push_back(line);
      ++d;
    } else if (c == '}' || c == ']') --d;
  }
  return lines;
}

std::string fmt(const char* spec, double v) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double mean_sorted(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_sorted(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalRow summarise(std::string config, std::string category, const std::vector<const QueryOutcome*>& outs) {
  EvalRow row;
  row.config = std::move(config);
  row.category = std::move(category);
  std::vector<double> dist, time;
  std::size_t near = 0, far = 0;
  for (const auto* o : outs) {
    if (o->error_code) {
      ++row.n_errors;
      continue;
    }
    dist.push_back(o->best_distance_km);
    time.push_back(o->search_time_s);
    near += o->hit_50;
    far += o->hit_100;
  }
  // sorted summation makes the aggregate independent of query order
  std::sort(dist.begin(), dist.end());
  std::sort(time.begin(), time.end());
  row.n_queries = dist.size();
  row.mean_distance_km = mean_sorted(dist);
  row.median_distance_km = median_sorted(dist);
  row.mean_search_time_s = mean_sorted(time);
  const double n = static_cast<double>(dist.size());
  row.pct_within_50 = dist.empty() ? std::numeric_limits<double>::quiet_NaN() : 100.0 * static_cast<double>(near) / n;
  row.pct_within_100 = dist.empty() ? std::numeric_limits<double>::quiet_NaN() : 100.0 * static_cast<double>(far) / n;
  return row;
}

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

double number_from(const json& j, const char* name) {
  if (!j.contains(name)) throw FormatError(std::string("report row lacks '") + name + "'");
  if (j[name].is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j[name].is_number()) throw FormatError(std::string("report field '") + name + "' is not a number");
  return j[name].get<double>();
}

}  // namespace

std::string_view to_string(DisasterCategory c) {
  switch (c) {
    case DisasterCategory::UK_Floods: return "UK_Floods";
    case DisasterCategory::US_Wildfires: return "US_Wildfires";
    case DisasterCategory::US_Droughts: return "US_Droughts";
    case DisasterCategory::Other: return "Other";
  }
  return "Other";
}

std::string_view display_name(DisasterCategory c) {
  switch (c) {
    case DisasterCategory::UK_Floods: return "UK Floods";
    case DisasterCategory::US_Wildfires: return "US Wildfires";
    case DisasterCategory::US_Droughts: return "US Droughts";
    case DisasterCategory::Other: return "Other";
  }
  return "Other";
}

std::optional<DisasterCategory> parse_category(std::string_view s) {
  for (auto c : kReportOrder) {
    if (s == to_string(c) || s == display_name(c)) return c;
  }
  return std::nullopt;
}

std::vector<DisasterQuery> load_queries(const std::filesystem::path& path) {
  const auto text = detail::read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what() + " (line " +
                      std::to_string(detail::line_of(text, e.byte)) + ")");
  }
  const bool wrapped = doc.is_object() && doc.contains("queries");
  const json& list = wrapped ? doc["queries"] : doc;
  if (!list.is_array()) throw FormatError(path.string() + ": expected an array of queries");
  const auto lines = record_lines(text, wrapped ? 2 : 1);

  std::vector<DisasterQuery> out;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& q = list[i];
    const std::uint64_t line = i < lines.size() ? lines[i] : 0;
    auto fail = [&](const std::string& what) {
      throw FormatError(path.string() + ": query " + std::to_string(i + 1) + ": " + what + " (line " +
                        std::to_string(line) + ")");
    };
    if (!q.is_object()) fail("not an object");
    auto text_field = [&](const char* name) {
      if (!q.contains(name) || !q[name].is_string() || q[name].get<std::string>().empty()) {
        fail(std::string("'") + name + "' must be a non-empty string");
      }
      return q[name].get<std::string>();
    };
    auto number = [&](const char* name) {
      if (!q.contains(name) || !q[name].is_number()) fail(std::string("'") + name + "' must be a number");
      return q[name].get<double>();
    };
    const auto id = text_field("id");
    const auto query_text = text_field("query_text");
    const double lat = number("lat");
    const double lon = number("lon");
    if (lat < -90.0 || lat > 90.0) fail("latitude out of range");
    if (lon < -180.0 || lon > 180.0) fail("longitude out of range");
    const auto cat = parse_category(text_field("category"));
    if (!cat) fail("unknown category");
    if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
      throw DuplicateKeyError(path.string() + ": duplicate query id '" + id + "' (line " + std::to_string(line) + ")");
    }
    ids.push_back(id);
    out.push_back(DisasterQuery{id, query_text, GeoPoint(lat, lon), *cat});
  }
  return out;
}

void save_queries(const std::filesystem::path& path, const std::vector<DisasterQuery>& queries) {
  std::string out = "{\"queries\": [\n";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const json j{{"id", q.id},
                 {"query_text", q.query_text},
                 {"lat", q.truth.lat()},
                 {"lon", q.truth.lon()},
                 {"category", std::string(to_string(q.category))}};
    out += "  " + j.dump() + (i + 1 < queries.size() ? ",\n" : "\n");
  }
  out += "]}\n";
  detail::write_file(path, out);
}

QueryOutcome score_query(const QueryResult& result, const GeoPoint& truth, const GridSpec& grid,
                         std::size_t top_n) {
  if (result.results.empty()) throw EmptyResultError("query '" + result.query_text + "' returned no tiles");
  if (top_n == 0) throw InputError("top_n must be positive");
  QueryOutcome o;
  o.best_distance_km = std::numeric_limits<double>::infinity();
  const auto n = std::min(top_n, result.results.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = haversine_km(truth, tile_centre(grid, result.results[i].key.tile));
    o.best_distance_km = std::min(o.best_distance_km, d);
  }
  o.hit_50 = o.best_distance_km <= kNearRadiusKm;
  o.hit_100 = o.best_distance_km <= kFarRadiusKm;
  o.search_time_s = result.total_ms / 1000.0;
  return o;
}

std::vector<ConfigOutcomes> run_queries(const std::vector<DisasterQuery>& queries,
                                        const std::vector<SearchConfig>& configs,
                                        const SearchEngine& engine, const GridSpec& grid,
                                        std::size_t top_n, int threads) {
  std::vector<ConfigOutcomes> runs;
  for (const auto& config : configs) {
    ConfigOutcomes run{config, std::vector<QueryOutcome>(queries.size())};
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, threads)) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto& q = queries[i];
      QueryOutcome o;
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto result = two_stage_query(q.query_text, config, engine);
        const auto stop = std::chrono::steady_clock::now();
        o = score_query(result, q.truth, grid, top_n);
        o.search_time_s = std::chrono::duration<double>(stop - start).count();
      } catch (const Error& e) {
        o.error_code = e.code();
        o.message = e.what();
        o.search_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
      o.query_id = q.id;
      o.category = q.category;
      run.outcomes[i] = std::move(o);
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

EvalReport aggregate(const std::vector<ConfigOutcomes>& runs, std::size_t top_n) {
  EvalReport report;
  report.top_n = top_n;
  for (const auto& run : runs) {
    if (run.outcomes.empty()) continue;
    for (auto cat : kReportOrder) {
      std::vector<const QueryOutcome*> subset;
      for (const auto& o : run.outcomes) {
        if (o.category == cat) subset.push_back(&o);
      }
      if (!subset.empty()) report.rows.push_back(summarise(run.config.name, std::string(display_name(cat)), subset));
    }
    std::vector<const QueryOutcome*> all;
    for (const auto& o : run.outcomes) all.push_back(&o);
    report.rows.push_back(summarise(run.config.name, std::string(kOverallLabel), all));
  }
  return report;
}

EvalReport run_ablation(const std::vector<DisasterQuery>& queries,
                        const std::vector<SearchConfig>& configs, const SearchEngine& engine,
                        const GridSpec& grid, std::size_t top_n, int threads) {
  return aggregate(run_queries(queries, configs, engine, grid, top_n, threads), top_n);
}

double random_baseline(const std::vector<TileId>& tiles, const std::vector<GeoPoint>& truths,
                       std::size_t n_trials, std::uint64_t seed, const GridSpec& grid) {
  if (tiles.empty() || truths.empty() || n_trials == 0) {
    throw InputError("random baseline needs tiles, truths and at least one trial");
  }
  std::vector<GeoPoint> centres;
  centres.reserve(tiles.size());
  for (const auto& t : tiles) centres.push_back(tile_centre(grid, t));
  auto rng = rnd::make_engine(seed);
  std::size_t hits = 0;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    for (const auto& truth : truths) {
      hits += haversine_km(truth, centres[rnd::below(rng, centres.size())]) <= kNearRadiusKm;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n_trials * truths.size());
}

std::optional<ReportStyle> parse_report_style(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportStyle::Markdown;
  if (s == "csv") return ReportStyle::Csv;
  if (s == "json") return ReportStyle::Json;
  return std::nullopt;
}

std::string format_report(const EvalReport& report, ReportStyle style, bool extended) {
  if (style == ReportStyle::Json) return to_json(report).dump(2) + "\n";

  std::vector<std::string> header = {"Configuration", "Disaster Type", "Mean Distance (km)",
                                     "<50 km (%)",    "<100 km (%)",   "Search Time (s)"};
  if (extended) header.insert(header.end(), {"Median Distance (km)", "Queries", "Errors"});

  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    std::vector<std::string> row = {r.config,
                                    r.category,
                                    fmt("%.1f", r.mean_distance_km),
                                    fmt("%.1f", r.pct_within_50),
                                    fmt("%.1f", r.pct_within_100),
                                    fmt("%.2f", r.mean_search_time_s)};
    if (extended) {
      row.insert(row.end(), {fmt("%.1f", r.median_distance_km), std::to_string(r.n_queries),
                             std::to_string(r.n_errors)});
    }
    cells.push_back(std::move(row));
  }

  std::string out;
  auto join = [&out](const std::vector<std::string>& v, const char* open, const char* sep, const char* close) {
    out += open;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    out += close;
  };
  if (style == ReportStyle::Csv) {
    join(header, "", ",", "\n");
    for (const auto& row : cells) join(row, "", ",", "\n");
  } else {
    join(header, "| ", " | ", " |\n");
    std::vector<std::string> rule(header.size(), "---:");
    rule[0] = rule[1] = "---";
    join(rule, "|", "|", "|\n");
    for (const auto& row : cells) join(row, "| ", " | ", " |\n");
  }
  return out;
}

json to_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"config", r.config},
                        {"category", r.category},
                        {"n_queries", r.n_queries},
                        {"n_errors", r.n_errors},
                        {"mean_distance_km", number_or_null(r.mean_distance_km)},
                        {"median_distance_km", number_or_null(r.median_distance_km)},
                        {"pct_within_50", number_or_null(r.pct_within_50)},
                        {"pct_within_100", number_or_null(r.pct_within_100)},
                        {"mean_search_time_s", number_or_null(r.mean_search_time_s)}});
  }
  return json{{"top_n", report.top_n}, {"rows", std::move(rows)}};
}

EvalReport report_from_json(const json& j) {
  if (!j.is_object() || !j.contains("rows") || !j["rows"].is_array() || !j.contains("top_n")) {
    throw FormatError("eval report JSON needs top_n and rows");
  }
  EvalReport report;
  report.top_n = j["top_n"].get<std::size_t>();
  for (const auto& r : j["rows"]) {
    EvalRow row;
    row.config = r.at("config").get<std::string>();
    row.category = r.at("category").get<std::string>();
    row.n_queries = r.at("n_queries").get<std::size_t>();
    row.n_errors = r.at("n_errors").get<std::size_t>();
    row.mean_distance_km = number_from(r, "mean_distance_km");
    row.median_distance_km = number_from(r, "median_distance_km");
    row.pct_within_50 = number_from(r, "pct_within_50");
    row.pct_within_100 = number_from(r, "pct_within_100");
    row.mean_search_time_s = number_from(r, "mean_search_time_s");
    report.rows.push_back(std::move(row));
  }
  return report;
}

json to_json(const QueryOutcome& o) {
  json j{{"query_id", o.query_id},
         {"category", std::string(to_string(o.category))},
         {"best_distance_km", o.best_distance_km},
         {"hit_50", o.hit_50},
         {"hit_100", o.hit_100},
         {"search_time_s", o.search_time_s}};
  if (o.error_code) {
    j["error_code"] = *o.error_code;
    j["message"] = o.message;
  }
  return j;
}

QueryOutcome outcome_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("outcome must be an object");
  QueryOutcome o;
  o.query_id = j.at("query_id").get<std::string>();
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw FormatError("outcome has unknown category");
  o.category = *cat;
  o.search_time_s = j.at("search_time_s").get<double>();
  if (j.contains("error_code")) {
    o.error_code = j["error_code"].get<std::string>();
    o.message = j.value("message", "");
    return o;
  }
  o.best_distance_km = j.at("best_distance_km").get<double>();
  if (!(o.best_distance_km >= 0.0)) throw FormatError("best_distance_km must be non-negative");
  o.hit_50 = o.best_distance_km <= kNearRadiusKm;
  o.hit_100 = o.best_distance_km <= kFarRadiusKm;
  return o;
}

}  // namespace geoquery
