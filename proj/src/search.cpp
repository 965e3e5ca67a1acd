// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/search.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <exception>
#include <unordered_map>

#include "geoquery/error.hpp"
#include "json_util.hpp"

namespace geoquery {

using detail::json;

const std::vector<SearchConfig>& preset_configs() {
  static const std::vector<SearchConfig> presets = {
      {"balanced_large", 15, 30},
      {"baseline", 10, 20},
      {"text_focused", 20, 10},
      {"image_focused", 5, 30},
  };
  return presets;
}

namespace {

bool parse_positive(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && out > 0;
}

bool ranked_before(const RankedTile& a, const RankedTile& b) {
  return a.score > b.score || (a.score == b.score && a.key < b.key);
}

double elapsed_ms(std::chrono::steady_clock::time_point from, std::chrono::steady_clock::time_point to) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

}  // namespace

SearchConfig resolve_config(std::string_view name) {
  for (const auto& p : preset_configs()) {
    if (p.name == name) return p;
  }
  constexpr std::string_view kCustom = "custom:";
  if (name.starts_with(kCustom)) {
    const auto rest = name.substr(kCustom.size());
    const auto colon = rest.find(':');
    SearchConfig c{std::string(name), 0, 0};
    if (colon != std::string_view::npos && parse_positive(rest.substr(0, colon), c.k_text) &&
        parse_positive(rest.substr(colon + 1), c.k_image)) {
      return c;
    }
  }
  std::string valid;
  for (const auto& p : preset_configs()) valid += p.name + ", ";
  throw ConfigError("unknown search config '" + std::string(name) + "'; valid: " + valid + "custom:KT:KI");
}

std::vector<RankedTile> fuse_anchors(const std::vector<Neighbour>& anchors, std::size_t k_image,
                                     const Index& visual, std::optional<Season> season) {
  if (k_image == 0) throw InputError("k_image must be positive");
  std::vector<std::span<const float>> anchor_vecs;
  anchor_vecs.reserve(anchors.size());
  for (const auto& a : anchors) {
    auto v = visual.vector_of(a.key);
    if (v.empty()) throw NotFoundError("anchor " + to_string(a.key) + " is not in the visual index");
    anchor_vecs.push_back(v);
  }

  std::vector<std::vector<Neighbour>> per_anchor(anchors.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(anchors.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      per_anchor[i] = visual.knn_unit(anchor_vecs[i], k_image, season);
    } catch (...) {
#pragma omp critical(geoquery_fuse_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // best candidate per tile; equal scores keep the smaller anchor key
  std::unordered_map<TileKey, RankedTile, TileKeyHash> best;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (const auto& nb : per_anchor[i]) {
      if (nb.score <= 0.0) continue;
      RankedTile cand{nb.key, anchors[i].score * nb.score, anchors[i].key, anchors[i].score, nb.score};
      auto [it, inserted] = best.try_emplace(nb.key, cand);
      if (!inserted && (cand.score > it->second.score ||
                        (cand.score == it->second.score && cand.anchor < it->second.anchor))) {
        it->second = cand;
      }
    }
  }
  std::vector<RankedTile> out;
  out.reserve(best.size());
  for (auto& [key, tile] : best) out.push_back(tile);
  std::sort(out.begin(), out.end(), ranked_before);
  return out;
}

QueryResult two_stage_query(std::string_view query_text, const SearchConfig& config,
                            const SearchEngine& engine, const QueryOptions& options) {
  if (engine.proxy == nullptr || engine.proxy->empty() || !engine.proxy->text_index) {
    throw NotReadyError("proxy corpus is empty or not loaded");
  }
  if (engine.visual == nullptr) throw NotReadyError("visual index is not loaded");
  if (query_text.empty()) throw InputError("query text is empty");
  if (config.k_text == 0 || config.k_image == 0) throw ConfigError("k_text and k_image must be positive");

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto query = embed_text(engine.provider, query_text);
  if (query.dim() != engine.proxy->text_index->dim()) {
    throw DimensionError("provider dim " + std::to_string(query.dim()) + " != proxy text dim " +
                         std::to_string(engine.proxy->text_index->dim()));
  }
  const auto anchors = engine.proxy->text_index->knn(query, config.k_text);
  const auto t1 = clock::now();
  auto fused = fuse_anchors(anchors, config.k_image, *engine.visual, options.season);
  const auto t2 = clock::now();

  QueryResult r;
  r.query_text = std::string(query_text);
  r.config = config;
  r.results = std::move(fused);
  r.stage1_ms = elapsed_ms(t0, t1);
  r.stage2_ms = elapsed_ms(t1, t2);
  r.total_ms = elapsed_ms(t0, t2);
  return r;
}

std::vector<Neighbour> similar_by_tile(const TileKey& key, std::size_t k, const Index& visual) {
  if (k == 0) throw InputError("k must be positive");
  const auto v = visual.vector_of(key);
  if (v.empty()) throw NotFoundError("tile " + to_string(key) + " is not in the visual index");
  auto res = visual.knn_unit(v, k + 1);
  std::erase_if(res, [&key](const Neighbour& n) { return n.key == key; });
  if (res.size() > k) res.resize(k);
  return res;
}

json to_json(const SearchConfig& c) {
  return json{{"name", c.name}, {"k_text", c.k_text}, {"k_image", c.k_image}};
}

json to_json(const RankedTile& t) {
  auto j = detail::key_to_json(t.key);
  j["score"] = t.score;
  j["anchor"] = detail::key_to_json(t.anchor);
  j["anchor_text_sim"] = t.anchor_text_sim;
  j["visual_sim"] = t.visual_sim;
  return j;
}

json to_json(const QueryResult& r) {
  json results = json::array();
  for (const auto& t : r.results) results.push_back(to_json(t));
  return json{{"query_text", r.query_text}, {"config", to_json(r.config)}, {"results", std::move(results)},
              {"stage1_ms", r.stage1_ms},   {"stage2_ms", r.stage2_ms},    {"total_ms", r.total_ms}};
}

json to_json(const Neighbour& n) {
  auto j = detail::key_to_json(n.key);
  j["score"] = n.score;
  return j;
}

}  // namespace geoquery
