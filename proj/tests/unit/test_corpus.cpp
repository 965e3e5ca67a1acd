// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <map>
#include <random>

#include "geoquery/corpus.hpp"
#include "geoquery/error.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace geoquery;
using nlohmann::json;

namespace {

ProviderConfig text_provider(std::size_t dim = 32) {
  ProviderConfig p;
  p.dim = dim;
  return p;
}

std::string manifest_line(const TileKey& k, const std::vector<float>& v) {
  json j{{"col", k.tile.col}, {"row", k.tile.row}, {"season", std::string(to_string(k.season))}, {"embedding", v}};
  return j.dump() + "\n";
}

DescribeOracle::Table describe_all(const std::vector<TileKey>& keys) {
  DescribeOracle::Table t;
  for (const auto& k : keys) t[k] = "tile " + to_string(k) + " with fields and a river";
  return t;
}

}  // namespace

TEST(Ingest, WellFormedManifest) {
  testutil::TempDir dir;
  const auto c = testutil::random_corpus(1, 100, 8);
  write_manifest(dir / "m.ndjson", c.entries());
  for (std::size_t batch : {1u, 7u, 4096u}) {
    const auto idx = ingest_visual(dir / "m.ndjson", {}, batch);
    EXPECT_EQ(idx.size(), 100u);
    EXPECT_EQ(idx.dim(), 8u);
    for (std::size_t i = 0; i < c.keys.size(); ++i) {
      const auto res = idx.knn(EmbeddingVector(c.rows[i]), 1);
      ASSERT_EQ(res[0].key, c.keys[i]);
    }
  }
}

TEST(Ingest, ErrorsNameTheRecordOrdinal) {
  testutil::TempDir dir;
  const auto c = testutil::random_corpus(2, 40, 4);
  auto build = [&](std::size_t bad, const std::string& replacement) {
    std::string text;
    for (std::size_t i = 0; i < c.keys.size(); ++i) {
      text += i + 1 == bad ? replacement : manifest_line(c.keys[i], c.rows[i]);
    }
    testutil::spit(dir / "m.ndjson", text);
    return dir / "m.ndjson";
  };
  auto message_of = [](const std::filesystem::path& p) -> std::string {
    try {
      ingest_visual(p);
    } catch (const Error& e) {
      return e.code() + ": " + e.what();
    }
    return "no error";
  };

  const auto wrong_dim = message_of(build(37, manifest_line(c.keys[36], {1, 2, 3})));
  EXPECT_NE(wrong_dim.find("DimensionError"), std::string::npos) << wrong_dim;
  EXPECT_NE(wrong_dim.find("37"), std::string::npos) << wrong_dim;

  const auto dup = message_of(build(12, manifest_line(c.keys[0], c.rows[11])));
  EXPECT_NE(dup.find("DuplicateKeyError"), std::string::npos) << dup;
  EXPECT_NE(dup.find("12"), std::string::npos) << dup;

  const auto junk = message_of(build(5, "{not json\n"));
  EXPECT_NE(junk.find("FormatError"), std::string::npos) << junk;
  EXPECT_NE(junk.find("5"), std::string::npos) << junk;

  try {
    ingest_visual(build(9, R"({"col":1,"row":2,"season":"Q7","embedding":[1,0,0,0]})" "\n"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 9u);
  }
  EXPECT_THROW(ingest_visual(dir / "absent.ndjson"), InputError);
  testutil::spit(dir / "empty.ndjson", "\n\n");
  EXPECT_THROW(ingest_visual(dir / "empty.ndjson"), InputError);
}

TEST(Ingest, ProducesAValidIndex) {
  testutil::TempDir dir;
  const auto c = testutil::random_corpus(3, 500, 16);
  write_manifest(dir / "m.ndjson", c.entries());
  IndexParams p;
  p.backend = IndexParams::Backend::PrunedClusters;
  const auto idx = ingest_visual(dir / "m.ndjson", p, 64);
  ASSERT_TRUE(std::is_sorted(idx.keys().begin(), idx.keys().end()));
  for (const auto& k : idx.keys()) {
    double s = 0;
    for (float x : idx.vector_of(k)) s += static_cast<double>(x) * x;
    ASSERT_NEAR(s, 1.0, 1e-5);
  }
  const auto direct = Index::build(c.entries(), p);
  const EmbeddingVector q(c.rows[17]);
  EXPECT_EQ(idx.knn(q, 10), direct.knn(q, 10));
}

TEST(SampleProxy, ExhaustiveAndDeterministic) {
  std::mt19937_64 rng(4);
  const auto keys = testutil::random_keys(rng, 10);
  auto shuffled = keys;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(sample_proxy(shuffled, 10, 1), keys);

  const auto many = testutil::random_keys(rng, 500);
  const auto a = sample_proxy(many, 50, 99);
  EXPECT_EQ(a, sample_proxy(many, 50, 99));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto reversed = many;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(a, sample_proxy(reversed, 50, 99));  // a function of the key set
  EXPECT_NE(a, sample_proxy(many, 50, 100));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
}

TEST(SampleProxy, Errors) {
  std::mt19937_64 rng(5);
  const auto keys = testutil::random_keys(rng, 10);
  EXPECT_THROW(sample_proxy(keys, 11, 0), InputError);
  EXPECT_THROW(sample_proxy(keys, 0, 0), InputError);
  auto dup = keys;
  dup.push_back(keys[3]);
  EXPECT_THROW(sample_proxy(dup, 2, 0), DuplicateKeyError);
}

TEST(SampleProxy, InclusionFrequenciesAreBinomial) {
  std::mt19937_64 rng(6);
  const std::size_t n_keys = 10000, n = 1000, seeds = 200;
  const auto keys = testutil::random_keys(rng, n_keys);
  std::map<TileKey, int> count;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    for (const auto& k : sample_proxy(keys, n, s)) ++count[k];
  }
  const double p = static_cast<double>(n) / n_keys;
  const double mean = seeds * p;
  const double sd = std::sqrt(seeds * p * (1 - p));
  int worst_key_z = 0;
  double chi2 = 0;
  for (const auto& k : keys) {
    const int c = count.count(k) ? count[k] : 0;
    const double z = std::abs(c - mean) / sd;
    if (z > 4.0) ++worst_key_z;
    chi2 += (c - mean) * (c - mean) / (sd * sd);
  }
  // P(|z| > 4) ~ 6e-5 per key, so 0-3 expected outliers among 10k keys
  EXPECT_LE(worst_key_z, 3);
  // the normalised dispersion should be near 1 (sd of chi2/N ~ sqrt(2/N))
  EXPECT_NEAR(chi2 / n_keys, 1.0, 0.1);
}

TEST(DescribeAndEmbed, FixtureWithAllKeys) {
  std::mt19937_64 rng(7);
  const auto keys = testutil::random_keys(rng, 20);
  const auto oracle = DescribeOracle::from_tables({{"", describe_all(keys)}});
  for (int conc : {1, 4}) {
    const auto res = describe_and_embed(keys, oracle, text_provider(), conc);
    ASSERT_EQ(res.records.size(), 20u);
    EXPECT_TRUE(res.failures.empty());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      EXPECT_EQ(res.records[i].key, keys[i]);
      EXPECT_EQ(res.records[i].text_embedding, embed_text(text_provider(), res.records[i].description));
    }
  }
}

TEST(DescribeAndEmbed, MissingKeyIsCollected) {
  std::mt19937_64 rng(8);
  const auto keys = testutil::random_keys(rng, 10);
  auto table = describe_all(keys);
  table.erase(keys[4]);
  const auto res = describe_and_embed(keys, DescribeOracle::from_tables({{"", table}}), text_provider());
  EXPECT_EQ(res.records.size(), 9u);
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(res.failures[0].key, keys[4]);
  EXPECT_EQ(res.failures[0].error_code, "MissingDescriptionError");
}

TEST(DescribeAndEmbed, FixtureFileAndDirectory) {
  testutil::TempDir dir;
  std::mt19937_64 rng(9);
  const auto keys = testutil::random_keys(rng, 5);
  write_description_fixture(dir / "d.json", describe_all(keys));
  EXPECT_EQ(read_description_fixture(dir / "d.json"), describe_all(keys));
  auto res = describe_and_embed(keys, DescribeOracle::from_fixture(dir / "d.json"), text_provider());
  EXPECT_EQ(res.records.size(), 5u);

  std::filesystem::create_directory(dir / "descr");
  write_description_fixture(dir / "descr" / "p1.json", describe_all(keys));
  const PromptCandidate p1{"p1", "describe the tile"}, p2{"p2", "other"};
  res = describe_and_embed(keys, DescribeOracle::from_fixture(dir / "descr"), text_provider(), 1, &p1);
  EXPECT_EQ(res.records.size(), 5u);
  EXPECT_THROW(describe_and_embed(keys, DescribeOracle::from_fixture(dir / "descr"), text_provider(), 1, &p2),
               MissingDescriptionError);
}

TEST(DescribeOracle, ExactlyOneSource) {
  DescribeOracle o;
  EXPECT_THROW(o.validate(), InputError);
  o = DescribeOracle::from_remote("http://127.0.0.1:9/describe");
  EXPECT_NO_THROW(o.validate());
  o.fixture_path = "/tmp/x.json";
  EXPECT_THROW(o.validate(), InputError);
}

TEST(DescribeAndEmbed, StubRemoteOracle) {
  std::atomic<int> calls = 0;
  testutil::StubServer stub([&calls](httplib::Server& s) {
    s.Post("/describe", [&calls](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      const auto j = json::parse(req.body);
      if (j["col"].get<int>() % 10 == 3) {
        res.status = 500;
        return;
      }
      const auto text = "fields at " + std::to_string(j["col"].get<int>()) + " " + j["season"].get<std::string>() +
                        " " + j.value("prompt_id", std::string("none"));
      res.set_content(json{{"description", text}}.dump(), "application/json");
    });
  });
  std::vector<TileKey> keys;
  for (std::uint32_t i = 0; i < 100; ++i) keys.push_back({{i, 7}, static_cast<Season>(i % 4)});
  const auto provider = text_provider(48);
  const PromptCandidate prompt{"pX", "describe"};
  const auto res = describe_and_embed(keys, DescribeOracle::from_remote(stub.url("/describe")), provider, 8, &prompt);
  EXPECT_EQ(res.records.size(), 90u);
  EXPECT_EQ(res.failures.size(), 10u);
  for (const auto& f : res.failures) EXPECT_EQ(f.error_code, "ProviderUnavailable");
  std::size_t r = 0;
  for (std::uint32_t i = 0; i < 100; ++i) {
    if (i % 10 == 3) continue;
    ASSERT_EQ(res.records[r].key, keys[i]);
    EXPECT_EQ(res.records[r].text_embedding.dim(), 48u);
    EXPECT_NE(res.records[r].description.find("pX"), std::string::npos);
    ++r;
  }
  EXPECT_GE(calls.load(), 100);
}

TEST(ProxyPersistence, RoundTripIsExact) {
  testutil::TempDir dir;
  const auto c = testutil::random_corpus(10, 60, 8);
  const auto visual = Index::build(c.entries());
  const std::vector<TileKey> subset(c.keys.begin(), c.keys.begin() + 30);
  auto res = describe_and_embed(subset, DescribeOracle::from_tables({{"", describe_all(subset)}}), text_provider());
  res.records[3].description = "unicode: café ☃ \"quoted\"\nnewline";
  save_proxy(dir / "p.ndjson", res.records, text_provider().identity());
  const auto corpus = load_proxy(dir / "p.ndjson", &visual);
  EXPECT_EQ(corpus.records, res.records);
  EXPECT_EQ(corpus.provider_identity, "synthetic:seed=0:dim=32");
  EXPECT_EQ(corpus.dim, 32u);
  ASSERT_TRUE(corpus.text_index);
  EXPECT_EQ(corpus.text_index->size(), 30u);
  ASSERT_NE(corpus.find(subset[5]), nullptr);
  EXPECT_EQ(corpus.find(subset[5])->key, subset[5]);
  EXPECT_EQ(corpus.find(c.keys[50]), nullptr);

  const auto direct = make_proxy_corpus(res.records, "x", &visual);
  const auto q = embed_text(text_provider(), "river fields");
  EXPECT_EQ(corpus.text_index->knn(q, 10), direct.text_index->knn(q, 10));

  save_proxy(dir / "q.ndjson", corpus.records, corpus.provider_identity);
  EXPECT_EQ(testutil::slurp(dir / "p.ndjson"), testutil::slurp(dir / "q.ndjson"));
}

TEST(ProxyPersistence, ReferentialIntegrityAndCorruption) {
  testutil::TempDir dir;
  const auto c = testutil::random_corpus(11, 20, 4);
  const auto visual = Index::build(c.entries());
  const std::vector<TileKey> subset(c.keys.begin(), c.keys.begin() + 5);
  const auto res = describe_and_embed(subset, DescribeOracle::from_tables({{"", describe_all(subset)}}), text_provider());
  save_proxy(dir / "p.ndjson", res.records, "synthetic:seed=0:dim=32");
  const auto text = testutil::slurp(dir / "p.ndjson");
  const auto first_nl = text.find('\n');
  const auto header = text.substr(0, first_nl);
  const auto body = text.substr(first_nl + 1);

  const auto other = Index::build(testutil::random_corpus(12, 20, 4).entries());
  EXPECT_THROW(load_proxy(dir / "p.ndjson", &other), FormatError);

  auto expect_error = [&](const std::string& content, auto type_tag, std::optional<std::uint64_t> line) {
    testutil::spit(dir / "bad.ndjson", content);
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        load_proxy(dir / "bad.ndjson", &visual);
        ADD_FAILURE() << "loaded: " << content.substr(0, 80);
      } catch (const decltype(type_tag)& e) {
        if constexpr (std::is_same_v<decltype(type_tag), FormatError>) {
          if (line) EXPECT_EQ(e.offset(), line) << e.what();
        }
      }
    }
  };
  expect_error("", FormatError(""), 1);
  expect_error("not json\n" + body, FormatError(""), 1);
  expect_error(R"({"format":"other","version":1,"dim":32,"count":5,"provider":"x"})" "\n" + body, FormatError(""), 1);
  expect_error(R"({"format":"geoquery-proxy","version":1,"dim":32,"count":6,"provider":"x"})" "\n" + body,
               FormatError(""), std::nullopt);
  expect_error(R"({"format":"geoquery-proxy","version":1,"dim":16,"count":5,"provider":"x"})" "\n" + body,
               FormatError(""), 2);
  expect_error(header + "\n" + body.substr(0, body.size() - 40), FormatError(""), std::nullopt);
  expect_error(R"({"format":"geoquery-proxy","version":2,"dim":32,"count":5,"provider":"x"})" "\n" + body,
               VersionError(""), std::nullopt);
}

TEST(KeyLists, RoundTrip) {
  testutil::TempDir dir;
  std::mt19937_64 rng(13);
  const auto keys = testutil::random_keys(rng, 30);
  write_keys(dir / "k.json", keys);
  EXPECT_EQ(read_keys(dir / "k.json"), keys);
  testutil::spit(dir / "bad.json", R"({"keys":[{"col":1,"row":2,"season":"Q9"}]})");
  EXPECT_THROW(read_keys(dir / "bad.json"), FormatError);
}
