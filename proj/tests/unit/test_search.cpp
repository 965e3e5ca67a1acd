// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "geoquery/error.hpp"
#include "geoquery/search.hpp"
#include "geoquery/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace geoquery;

namespace {

struct World {
  SynthWorld synth;
  Index visual;
  ProxyCorpus proxy;
  std::vector<std::vector<float>> rows;
  std::vector<std::vector<double>> unit;

  SearchEngine engine() const { return {&proxy, &visual, synth.text_provider}; }
};

const World& small_world() {
  static const World w = [] {
    SynthParams p;
    p.tiles = 600;
    p.clusters = 6;
    p.seed = 21;
    auto synth = generate_world(p);
    auto visual = build_visual_index(synth);
    auto proxy = make_proxy_corpus(synth.proxy, synth.text_provider.identity(), &visual);
    std::vector<std::vector<float>> rows;
    const auto dim = synth.params.dim;
    for (std::size_t i = 0; i < synth.keys.size(); ++i) {
      rows.emplace_back(synth.visual.begin() + i * dim, synth.visual.begin() + (i + 1) * dim);
    }
    auto unit = oracle::unit_rows(rows);
    return World{std::move(synth), std::move(visual), std::move(proxy), std::move(rows), std::move(unit)};
  }();
  return w;
}

std::vector<oracle::Hit> oracle_anchors(const World& w, const std::string& text, std::size_t k_text) {
  const auto q = embed_text(w.synth.text_provider, text);
  std::vector<TileKey> keys;
  std::vector<std::vector<float>> rows;
  for (const auto& r : w.proxy.records) {
    keys.push_back(r.key);
    rows.emplace_back(r.text_embedding.values().begin(), r.text_embedding.values().end());
  }
  return oracle::brute_knn(keys, rows, std::vector<float>(q.values().begin(), q.values().end()), k_text);
}

void expect_sorted_unique(const std::vector<RankedTile>& r) {
  std::set<TileKey> seen;
  for (std::size_t i = 0; i < r.size(); ++i) {
    ASSERT_TRUE(seen.insert(r[i].key).second) << "duplicate " << to_string(r[i].key);
    if (i > 0) {
      ASSERT_TRUE(r[i - 1].score > r[i].score || (r[i - 1].score == r[i].score && r[i - 1].key < r[i].key));
    }
    ASSERT_NEAR(r[i].score, r[i].anchor_text_sim * r[i].visual_sim, 1e-6);
    ASSERT_GT(r[i].visual_sim, 0.0);
  }
}

}  // namespace

TEST(Configs, PresetsInCanonicalOrder) {
  const auto& p = preset_configs();
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0], (SearchConfig{"balanced_large", 15, 30}));
  EXPECT_EQ(p[1], (SearchConfig{"baseline", 10, 20}));
  EXPECT_EQ(p[2], (SearchConfig{"text_focused", 20, 10}));
  EXPECT_EQ(p[3], (SearchConfig{"image_focused", 5, 30}));
}

TEST(Configs, Resolve) {
  EXPECT_EQ(resolve_config("balanced_large"), (SearchConfig{"balanced_large", 15, 30}));
  EXPECT_EQ(resolve_config("image_focused"), (SearchConfig{"image_focused", 5, 30}));
  const auto c = resolve_config("custom:7:13");
  EXPECT_EQ(c.k_text, 7u);
  EXPECT_EQ(c.k_image, 13u);
  for (const char* bad : {"nope", "custom:0:5", "custom:5", "custom:a:b", "custom:3:4:5", "Baseline", ""}) {
    try {
      resolve_config(bad);
      ADD_FAILURE() << bad;
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("balanced_large"), std::string::npos);
      EXPECT_NE(msg.find("image_focused"), std::string::npos);
    }
  }
}

TEST(TwoStage, SingleAnchorDegeneracy) {
  const TileKey a{{10, 10}, Season::Q1}, b{{11, 10}, Season::Q1}, c{{12, 10}, Season::Q2};
  const auto visual = Index::build({{a, {1, 0.1f, 0}}, {b, {1, 0.5f, 0}}, {c, {0.2f, 1, 0.3f}}});
  ProviderConfig provider;
  provider.dim = 64;
  const std::string text = "flooded river plain";
  const auto proxy = make_proxy_corpus({{a, "described", embed_text(provider, text)}}, provider.identity(), &visual);
  const SearchEngine engine{&proxy, &visual, provider};
  const auto r = two_stage_query(text, {"custom", 1, 3}, engine);
  ASSERT_EQ(r.results.size(), 3u);
  const auto self = visual.vector_of(a);
  const auto expected = visual.knn_unit(self, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.results[i].key, expected[i].key);
    EXPECT_EQ(r.results[i].anchor, a);
    EXPECT_NEAR(r.results[i].anchor_text_sim, 1.0, 1e-6);
    EXPECT_NEAR(r.results[i].score, expected[i].score, 1e-6);
  }
  EXPECT_EQ(r.results[0].key, a);  // anchors remain eligible
}

TEST(TwoStage, NegativeVisualSimilaritiesAreDropped) {
  const TileKey a{{1, 1}, Season::Q1}, b{{2, 1}, Season::Q1}, c{{3, 1}, Season::Q1};
  const auto visual = Index::build({{a, {1, 0}}, {b, {-1, 0.1f}}, {c, {0, 1}}});
  ProviderConfig provider;
  const auto proxy = make_proxy_corpus({{a, "x", embed_text(provider, "x")}}, provider.identity(), &visual);
  const auto r = two_stage_query("x", {"k", 1, 3}, {&proxy, &visual, provider});
  ASSERT_EQ(r.results.size(), 1u);  // c scores 0, b is negative
  EXPECT_EQ(r.results[0].key, a);
}

TEST(TwoStage, KTextLargerThanProxyUsesEveryProxy) {
  const auto& w = small_world();
  const auto r = two_stage_query("anything", {"big", 100000, 1}, w.engine());
  std::set<TileKey> anchors;
  for (const auto& t : r.results) anchors.insert(t.anchor);
  // k_image = 1: each anchor's nearest tile is itself
  EXPECT_EQ(anchors.size(), w.proxy.records.size());
  EXPECT_EQ(r.results.size(), w.proxy.records.size());
}

TEST(TwoStage, MatchesExhaustiveFusionOracle) {
  const auto& w = small_world();
  std::size_t swaps = 0, ambiguous_cuts = 0;
  for (const auto& q : w.synth.queries) {
    const auto ranked_anchors = oracle_anchors(w, q.query_text, 40);
    for (const auto& config : preset_configs()) {
      const auto got = two_stage_query(q.query_text, config, w.engine());
      ASSERT_LE(got.results.size(), config.k_text * config.k_image);
      std::vector<oracle::Hit> g;
      for (const auto& t : got.results) g.push_back({t.key, t.score});
      const auto choices = oracle::topk_choices(ranked_anchors, config.k_text, 1e-6);
      ambiguous_cuts += choices.size() > 1;
      bool matched = false;
      for (const auto& anchors : choices) {
        const auto want = oracle::fusion(anchors, config.k_image, w.synth.keys, w.unit);
        std::vector<oracle::Hit> o;
        for (const auto& f : want) o.push_back({f.key, f.score});
        const auto diff = oracle::compare_ranking(g, o, want.size(), 1e-6);
        if (!diff.ok) continue;
        matched = true;
        swaps += diff.near_tie_swaps;
        for (const auto& t : got.results) ASSERT_NEAR(t.score, t.anchor_text_sim * t.visual_sim, 1e-12);
        break;
      }
      ASSERT_TRUE(matched) << q.id << " " << config.name;
    }
  }
  RecordProperty("near_tie_swaps", static_cast<int>(swaps));
  RecordProperty("ambiguous_anchor_cuts", static_cast<int>(ambiguous_cuts));
}

TEST(TwoStage, SeasonOptionRestrictsCandidates) {
  const auto& w = small_world();
  const auto& q = w.synth.queries.front();
  const auto got = two_stage_query(q.query_text, resolve_config("baseline"), w.engine(), {Season::Q3});
  for (const auto& t : got.results) EXPECT_EQ(t.key.season, Season::Q3);
  const auto want = oracle::fusion(oracle_anchors(w, q.query_text, 10), 20, w.synth.keys, w.unit, Season::Q3);
  ASSERT_EQ(got.results.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(got.results[i].key, want[i].key);
}

TEST(TwoStage, DeterministicSortedUniqueRecomputable) {
  const auto& w = small_world();
  for (const auto& q : w.synth.queries) {
    for (const auto& config : preset_configs()) {
      const auto a = two_stage_query(q.query_text, config, w.engine());
      const auto b = two_stage_query(q.query_text, config, w.engine());
      expect_sorted_unique(a.results);
      ASSERT_EQ(a.results.size(), b.results.size());
      for (std::size_t i = 0; i < a.results.size(); ++i) {
        ASSERT_EQ(a.results[i].key, b.results[i].key);
        ASSERT_EQ(a.results[i].score, b.results[i].score);
        ASSERT_EQ(a.results[i].anchor, b.results[i].anchor);
      }
      EXPECT_EQ(a.query_text, q.query_text);
      EXPECT_EQ(a.config, config);
      EXPECT_GE(a.total_ms, 0.0);
      EXPECT_NEAR(a.total_ms, a.stage1_ms + a.stage2_ms, 1e-6);
    }
  }
}

TEST(TwoStage, MonotoneCoverage) {
  const auto& w = small_world();
  for (const auto& q : w.synth.queries) {
    for (std::size_t kt : {1u, 4u, 9u}) {
      for (std::size_t ki : {1u, 5u, 12u}) {
        const auto small = two_stage_query(q.query_text, {"s", kt, ki}, w.engine());
        const auto large = two_stage_query(q.query_text, {"l", kt + 3, ki + 7}, w.engine());
        std::set<TileKey> pool;
        for (const auto& t : large.results) pool.insert(t.key);
        for (const auto& t : small.results) ASSERT_TRUE(pool.count(t.key)) << to_string(t.key);
      }
    }
  }
}

TEST(TwoStage, Errors) {
  const auto& w = small_world();
  const ProxyCorpus empty;
  EXPECT_THROW(two_stage_query("x", resolve_config("baseline"), {&empty, &w.visual, w.synth.text_provider}),
               NotReadyError);
  EXPECT_THROW(two_stage_query("x", resolve_config("baseline"), {&w.proxy, nullptr, w.synth.text_provider}),
               NotReadyError);
  EXPECT_THROW(two_stage_query("", resolve_config("baseline"), w.engine()), InputError);
  auto wrong_dim = w.synth.text_provider;
  wrong_dim.dim = 32;
  EXPECT_THROW(two_stage_query("x", resolve_config("baseline"), {&w.proxy, &w.visual, wrong_dim}), DimensionError);
  ProviderConfig remote;
  remote.kind = ProviderConfig::Kind::Remote;
  remote.endpoint_url = testutil::dead_url("/embed");
  remote.dim = w.synth.text_provider.dim;
  remote.timeout_ms = 500;
  EXPECT_THROW(two_stage_query("x", resolve_config("baseline"), {&w.proxy, &w.visual, remote}), ProviderUnavailable);
}

TEST(TwoStage, JsonCarriesEveryField) {
  const auto& w = small_world();
  const auto r = two_stage_query("dunes", resolve_config("image_focused"), w.engine());
  const auto j = to_json(r);
  EXPECT_EQ(j["query_text"], "dunes");
  EXPECT_EQ(j["config"]["name"], "image_focused");
  EXPECT_EQ(j["config"]["k_text"], 5);
  EXPECT_EQ(j["config"]["k_image"], 30);
  ASSERT_EQ(j["results"].size(), r.results.size());
  const auto& first = j["results"][0];
  for (const char* f : {"col", "row", "season", "score", "anchor", "anchor_text_sim", "visual_sim"}) {
    EXPECT_TRUE(first.contains(f)) << f;
  }
  for (const char* f : {"stage1_ms", "stage2_ms", "total_ms"}) EXPECT_TRUE(j.contains(f)) << f;
}

TEST(SimilarByTile, SelfExclusionAndOracle) {
  const auto c = testutil::random_corpus(31, 1000, 16);
  const auto visual = Index::build(c.entries());
  std::mt19937_64 rng(32);
  for (int probe = 0; probe < 20; ++probe) {
    const auto i = rng() % c.keys.size();
    const auto res = similar_by_tile(c.keys[i], 10, visual);
    auto want = oracle::brute_knn(c.keys, c.rows, c.rows[i], 11);
    std::erase_if(want, [&](const oracle::Hit& h) { return h.key == c.keys[i]; });
    want.resize(10);
    ASSERT_EQ(res.size(), 10u);
    for (std::size_t r = 0; r < 10; ++r) {
      ASSERT_EQ(res[r].key, want[r].key);
      ASSERT_NEAR(res[r].score, want[r].score, 1e-6);
    }
    const auto one = similar_by_tile(c.keys[i], 1, visual);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].key, want[0].key);
  }
  EXPECT_THROW(similar_by_tile({{99999, 1}, Season::Q1}, 3, visual), NotFoundError);
  EXPECT_THROW(similar_by_tile(c.keys[0], 0, visual), InputError);
}

TEST(SimilarByTile, ExactDuplicateComesFirst) {
  auto c = testutil::random_corpus(33, 200, 8);
  auto entries = c.entries();
  const TileKey twin{{7777, 1}, Season::Q4};
  entries.push_back({twin, entries[50].vector});
  const auto visual = Index::build(entries);
  const auto res = similar_by_tile(c.keys[50], 3, visual);
  EXPECT_EQ(res[0].key, twin);
  EXPECT_NEAR(res[0].score, 1.0, 1e-6);
  const auto back = similar_by_tile(twin, 1, visual);
  EXPECT_EQ(back[0].key, c.keys[50]);
}
