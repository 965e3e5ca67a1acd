// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "geoquery/alignment.hpp"
#include "geoquery/error.hpp"
#include "geoquery/synth.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace geoquery;
using nlohmann::json;

namespace {

std::vector<EmbeddingVector> random_vectors(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(testutil::gaussian_vector(rng, dim));
  return out;
}

// Gram-Schmidt on a Gaussian matrix; rows are orthonormal.
std::vector<std::vector<double>> random_orthogonal(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> q;
  while (q.size() < dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = n(rng);
    for (const auto& u : q) {
      double d = 0;
      for (std::size_t i = 0; i < dim; ++i) d += v[i] * u[i];
      for (std::size_t i = 0; i < dim; ++i) v[i] -= d * u[i];
    }
    double s = 0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    if (s < 1e-6) continue;
    for (auto& x : v) x /= s;
    q.push_back(std::move(v));
  }
  return q;
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, bool ties) {
  std::uniform_int_distribution<int> small(0, 6);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? small(rng) : g(rng);
  return v;
}

}  // namespace

TEST(PairSample, DefaultsCapsAndValidity) {
  const auto s = sample_pairs(100, 1);
  EXPECT_EQ(s.pairs.size(), 4950u);  // 50 * 100 capped at 100*99/2
  EXPECT_NO_THROW(s.validate(100));
  const auto t = sample_pairs(1000, 2);
  EXPECT_EQ(t.pairs.size(), 50000u);
  EXPECT_NO_THROW(t.validate(1000));
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen(t.pairs.begin(), t.pairs.end());
  EXPECT_EQ(seen.size(), t.pairs.size());
  EXPECT_EQ(sample_pairs(1000, 2).pairs, t.pairs);
  EXPECT_NE(sample_pairs(1000, 3).pairs, t.pairs);
  EXPECT_EQ(sample_pairs(10, 0, 7).pairs.size(), 7u);
  EXPECT_THROW(sample_pairs(1, 0), InputError);
}

TEST(PairSample, ValidateRejectsBadPairs) {
  EXPECT_THROW((PairSample{{{1, 1}}, 0}.validate(3)), InputError);
  EXPECT_THROW((PairSample{{{0, 3}}, 0}.validate(3)), InputError);
  EXPECT_THROW((PairSample{{{0, 1}, {1, 0}}, 0}.validate(3)), InputError);
}

TEST(PairwiseDistances, Examples) {
  const std::vector<EmbeddingVector> v = {{1, 0}, {1, 0}, {0, 1}, {-1, 0}};
  const PairSample s{{{0, 1}, {0, 2}, {0, 3}}, 0};
  const auto d = pairwise_distances(v, s);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_NEAR(d[0], 0.0, 1e-12);
  EXPECT_NEAR(d[1], 1.0, 1e-12);
  EXPECT_NEAR(d[2], 2.0, 1e-12);
  EXPECT_THROW(pairwise_distances({{1, 0}, {1, 0, 0}}, PairSample{{{0, 1}}, 0}), DimensionError);
  EXPECT_THROW(pairwise_distances({{1, 0}, {1, 0}}, PairSample{{{0, 2}}, 0}), InputError);
}

TEST(PairwiseDistances, AllPairsOfFiveMatchScalarLoop) {
  std::mt19937_64 rng(4);
  std::vector<std::vector<float>> raw;
  std::vector<EmbeddingVector> v;
  for (int i = 0; i < 5; ++i) {
    raw.push_back(testutil::gaussian_vector(rng, 9));
    v.emplace_back(raw.back());
  }
  PairSample s;
  for (std::uint32_t i = 0; i < 5; ++i) {
    for (std::uint32_t j = i + 1; j < 5; ++j) s.pairs.push_back({i, j});
  }
  const auto d = pairwise_distances(v, s);
  ASSERT_EQ(d.size(), 10u);
  for (std::size_t p = 0; p < 10; ++p) {
    EXPECT_NEAR(d[p], 1.0 - oracle::cosine(raw[s.pairs[p].first], raw[s.pairs[p].second]), 1e-6);
  }
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {1, 2, 3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  const std::vector<double> x = {1, 2, 2, 5}, y = {3, 1, 4, 4};
  EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-9);
  // ranks (1, 2.5, 2.5, 4) and (2, 1, 3.5, 3.5): 2.25 / sqrt(4.5 * 4.5)
  EXPECT_NEAR(spearman(x, y), 0.5, 1e-12);
}

TEST(Spearman, AverageRanks) {
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_EQ(average_ranks({7, 7, 7}), (std::vector<double>{2, 2, 2}));
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman({1, 2, 3}, {1, 2}), InputError);
  EXPECT_THROW(spearman({1, 2}, {1, 2}), InputError);
  EXPECT_THROW(spearman({1, NAN, 3}, {1, 2, 3}), InputError);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), DegenerateInputError);
  EXPECT_THROW(spearman({1, 2, 3}, {4, 4, 4}), DegenerateInputError);
}

TEST(Spearman, MatchesRankThenPearsonOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(3, 300);
  for (int t = 0; t < 1000; ++t) {
    const auto n = len(rng);
    const auto x = random_values(rng, n, t % 2 == 0);
    const auto y = random_values(rng, n, t % 3 == 0);
    const bool constant = std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end() ||
                          std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end();
    if (constant) continue;
    ASSERT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-9) << "instance " << t;
  }
}

TEST(Spearman, SelfCorrelationIsOne) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_values(rng, 50, t % 2 == 0);
    ASSERT_DOUBLE_EQ(spearman(x, x), 1.0);
  }
}

TEST(Spearman, InvariantUnderStrictlyIncreasingTransforms) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_values(rng, 80, t % 2 == 0);
    const auto y = random_values(rng, 80, false);
    const double base = spearman(x, y);
    for (int f = 0; f < 3; ++f) {
      auto fx = x;
      for (auto& v : fx) v = f == 0 ? std::exp(v) : f == 1 ? v * v * v : 3.5 * v + 11.0;
      ASSERT_NEAR(spearman(fx, y), base, 1e-12);
      ASSERT_NEAR(spearman(y, fx), base, 1e-12);
    }
  }
}

TEST(AlignmentScore, IdenticalSpacesScoreOne) {
  std::mt19937_64 rng(8);
  const auto v = random_vectors(rng, 60, 16);
  const auto s = sample_pairs(60, 1, 500);
  const auto a = alignment_score(v, v, s);
  EXPECT_DOUBLE_EQ(a.rho, 1.0);
  EXPECT_EQ(a.n_pairs, 500u);
  EXPECT_THROW(alignment_score(v, std::vector<EmbeddingVector>(v.begin(), v.end() - 1), s), InputError);
}

TEST(AlignmentScore, OrthogonalMapInvariance) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const std::size_t dim = 16;
    const auto v = random_vectors(rng, 100, dim);
    const auto q = random_orthogonal(rng, dim);
    std::vector<EmbeddingVector> rotated;
    for (const auto& x : v) {
      std::vector<float> r(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < dim; ++j) s += q[i][j] * x[j];
        r[i] = static_cast<float>(s);
      }
      rotated.emplace_back(std::move(r));
    }
    EXPECT_NEAR(alignment_score(v, rotated, sample_pairs(100, t)).rho, 1.0, 1e-6);
  }
}

TEST(AlignmentScore, PermutedAssignmentIsNearNull) {
  std::mt19937_64 rng(10);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto text = random_vectors(rng, 200, 16);
    auto visual = text;
    std::shuffle(visual.begin(), visual.end(), rng);
    ASSERT_LT(std::abs(alignment_score(text, visual, sample_pairs(200, seed, 2000)).rho), 0.1) << seed;
  }
}

TEST(AlignmentScore, SymmetricInItsArguments) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_vectors(rng, 50, 8), b = random_vectors(rng, 50, 8);
    const auto s = sample_pairs(50, t, 400);
    ASSERT_EQ(alignment_score(a, b, s).rho, alignment_score(b, a, s).rho);
  }
}

TEST(AlignmentScore, InvariantUnderJointReordering) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 70;
    const auto a = random_vectors(rng, n, 8), b = random_vectors(rng, n, 8);
    const auto s = sample_pairs(n, t, 600);
    std::vector<std::uint32_t> perm(n);  // new position of old ordinal
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<EmbeddingVector> pa(a), pb(b);
    for (std::size_t i = 0; i < n; ++i) {
      pa[perm[i]] = a[i];
      pb[perm[i]] = b[i];
    }
    PairSample ps{{}, s.seed};
    for (const auto& [i, j] : s.pairs) ps.pairs.push_back({perm[i], perm[j]});
    ASSERT_EQ(alignment_score(a, b, s).rho, alignment_score(pa, pb, ps).rho);
  }
}

TEST(RankPrompts, SingleCandidateWithVerbatimKeys) {
  std::mt19937_64 rng(13);
  const auto keys = testutil::random_keys(rng, 30);
  DescribeOracle::Table table;
  for (const auto& k : keys) table[k] = to_string(k);
  const auto visual = random_vectors(rng, 30, 8);
  ProviderConfig embed;
  embed.dim = 64;
  const auto r = rank_prompts({{"verbatim", "say the key"}}, keys, DescribeOracle::from_tables({{"", table}}), embed,
                              visual, sample_pairs(30, 1));
  ASSERT_EQ(r.ranked.size(), 1u);
  EXPECT_TRUE(r.failed.empty());
  EXPECT_TRUE(std::isfinite(r.ranked[0].score->rho));
  EXPECT_LE(std::abs(r.ranked[0].score->rho), 1.0);
}

TEST(RankPrompts, MatchingEmbeddingsBeatShuffledOnes) {
  // the stub provider maps the description "v<i>" to visual vector i
  std::mt19937_64 rng(14);
  const std::size_t n = 80;
  const auto keys = testutil::random_keys(rng, n);
  const auto visual = random_vectors(rng, n, 12);
  testutil::StubServer stub([&visual](httplib::Server& s) {
    s.Post("/embed", [&visual](const httplib::Request& req, httplib::Response& res) {
      json rows = json::array();
      const auto body = json::parse(req.body);
      for (const auto& t : body["texts"]) {
        const auto& v = visual.at(std::stoul(t.get<std::string>().substr(1)));
        rows.push_back(std::vector<float>(v.values().begin(), v.values().end()));
      }
      res.set_content(json{{"embeddings", rows}}.dump(), "application/json");
    });
  });
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  DescribeOracle::Table a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a[keys[i]] = "v" + std::to_string(i);
    b[keys[i]] = "v" + std::to_string(perm[i]);
  }
  ProviderConfig embed;
  embed.kind = ProviderConfig::Kind::Remote;
  embed.endpoint_url = stub.url("/embed");
  embed.dim = 12;
  const auto r = rank_prompts({{"B", "shuffled"}, {"A", "faithful"}, {"C", "absent"}}, keys,
                              DescribeOracle::from_tables({{"A", a}, {"B", b}, {"C", {}}}), embed, visual,
                              sample_pairs(n, 3));
  ASSERT_EQ(r.ranked.size(), 2u);
  EXPECT_EQ(r.ranked[0].candidate_id, "A");
  EXPECT_DOUBLE_EQ(r.ranked[0].score->rho, 1.0);
  EXPECT_EQ(r.ranked[1].candidate_id, "B");
  EXPECT_LT(std::abs(r.ranked[1].score->rho), 0.2);
  ASSERT_EQ(r.failed.size(), 1u);
  EXPECT_EQ(r.failed[0].candidate_id, "C");
  EXPECT_EQ(r.failed[0].error_code, "MissingDescriptionError");
}

TEST(RankPrompts, TiesOrderByIdAndAllFailing) {
  std::mt19937_64 rng(15);
  const auto keys = testutil::random_keys(rng, 20);
  DescribeOracle::Table table;
  for (const auto& k : keys) table[k] = "tile " + to_string(k);
  const auto visual = random_vectors(rng, 20, 8);
  const ProviderConfig embed;
  const auto r = rank_prompts({{"zeta", "p"}, {"alpha", "p"}, {"mid", "p"}}, keys,
                              DescribeOracle::from_tables({{"", table}}), embed, visual, sample_pairs(20, 2));
  ASSERT_EQ(r.ranked.size(), 3u);
  EXPECT_EQ(r.ranked[0].candidate_id, "alpha");
  EXPECT_EQ(r.ranked[1].candidate_id, "mid");
  EXPECT_EQ(r.ranked[2].candidate_id, "zeta");
  EXPECT_THROW(rank_prompts({{"x", "p"}}, keys, DescribeOracle::from_tables({{"x", {}}}), embed, visual,
                            sample_pairs(20, 2)),
               AllCandidatesFailed);
  EXPECT_THROW(rank_prompts({}, keys, DescribeOracle::from_tables({{"", table}}), embed, visual, sample_pairs(20, 2)),
               InputError);
}

TEST(RankPrompts, GradedNoiseFixturesRankInNoiseOrder) {
  for (std::uint64_t seed : {1u, 2u}) {
    SynthParams p;
    p.tiles = 4000;
    p.clusters = 20;
    p.seed = seed;
    const auto world = generate_world(p);
    const auto visual = world.visual_vectors(world.alignment_keys);
    const auto r = rank_prompts(world.prompts, world.alignment_keys,
                                DescribeOracle::from_tables(world.prompt_descriptions), world.text_provider, visual,
                                sample_pairs(world.alignment_keys.size(), seed));
    ASSERT_EQ(r.ranked.size(), world.prompts.size());
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
      EXPECT_EQ(r.ranked[i].candidate_id, world.prompts[i].id) << "seed " << seed;
    }
  }
}

TEST(PromptCandidates, ReadsBothLayouts) {
  testutil::TempDir dir;
  testutil::spit(dir / "a.json", R"({"candidates":[{"id":"p1","prompt":"describe"}]})");
  testutil::spit(dir / "b.json", R"([{"id":"p2","prompt_text":"list"}])");
  testutil::spit(dir / "c.json", R"([{"id":"p3"}])");
  EXPECT_EQ(read_prompt_candidates(dir / "a.json")[0].prompt_text, "describe");
  EXPECT_EQ(read_prompt_candidates(dir / "b.json")[0].id, "p2");
  EXPECT_THROW(read_prompt_candidates(dir / "c.json"), FormatError);
}
