// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <unordered_set>

#include "geoquery/error.hpp"
#include "geoquery/random.hpp"
#include "json_util.hpp"

namespace geoquery {

using detail::json;

namespace {

struct Theme {
  const char* name;
  std::vector<std::string> words;
};

const std::vector<Theme>& themes() {
  static const std::vector<Theme> t = {
      {"flood", {"flood", "plain", "river", "valley", "inundated", "wetland", "levee", "floodwater"}},
      {"wildfire", {"wildfire", "burn", "scar", "charred", "forest", "smoke", "ember", "chaparral"}},
      {"drought", {"drought", "cracked", "parched", "withered", "dustbowl", "shrunken", "reservoir", "fallow"}},
      {"desert", {"desert", "sand", "dunes", "arid", "erg", "mesa", "sandstone", "wadi"}},
      {"urban", {"urban", "city", "buildings", "roads", "downtown", "concrete", "rooftops", "suburbs"}},
      {"glacier", {"glacier", "ice", "snowfield", "crevasse", "moraine", "frozen", "icefall", "nunatak"}},
      {"farmland", {"farmland", "fields", "crops", "irrigation", "pasture", "orchard", "tillage", "vineyard"}},
      {"coast", {"coastline", "beach", "shore", "harbour", "surf", "cliffs", "estuary", "spit"}},
      {"rainforest", {"rainforest", "jungle", "canopy", "tropical", "humid", "vines", "mangrove", "understory"}},
      {"mountain", {"mountain", "peaks", "alpine", "summit", "granite", "slopes", "scree", "cirque"}},
      {"tundra", {"tundra", "permafrost", "lichen", "moss", "treeless", "polar", "thermokarst", "sedge"}},
      {"savanna", {"savanna", "grassland", "acacia", "baobab", "herds", "termite", "thornbush", "veld"}},
      {"volcano", {"volcano", "lava", "crater", "basalt", "caldera", "ash", "fumarole", "cinder"}},
      {"lake", {"lake", "lagoon", "freshwater", "pond", "oxbow", "tarn", "lakeshore", "reeds"}},
      {"quarry", {"quarry", "mine", "pit", "tailings", "excavation", "openpit", "gravel", "spoil"}},
      {"steppe", {"steppe", "shrubland", "sagebrush", "semiarid", "rangeland", "tussock", "yurt", "plateau"}},
      {"island", {"island", "atoll", "reef", "coral", "archipelago", "islet", "cay", "seagrass"}},
      {"taiga", {"taiga", "boreal", "conifer", "spruce", "larch", "pine", "muskeg", "bog"}},
      {"industrial", {"industrial", "factory", "warehouse", "refinery", "railyard", "smokestack", "depot", "container"}},
      {"saltflat", {"saltpan", "salt", "flats", "evaporite", "playa", "crust", "brine", "gypsum"}},
  };
  return t;
}

constexpr std::size_t kWordsPerTheme = 8;
constexpr std::size_t kDescriptionWords = 6;
constexpr std::size_t kQueryWords = 3;

// RNG streams, one per generation phase
enum Stream : std::uint64_t { kPlace = 1, kVisual, kProxy, kDescribe, kQueries, kWords, kAlignKeys, kNoise = 100 };

std::string made_up_word(rnd::Engine& rng) {
  static constexpr const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "th"};
  static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::string w;
  const auto syllables = 2 + rnd::below(rng, 2);
  for (std::uint64_t i = 0; i < syllables; ++i) {
    w += kOnset[rnd::below(rng, std::size(kOnset))];
    w += kVowel[rnd::below(rng, std::size(kVowel))];
  }
  w += kOnset[rnd::below(rng, std::size(kOnset))];
  return w;
}

GeoPoint destination(const GeoPoint& from, double distance_km, double bearing) {
  const double d = distance_km / kEarthRadiusKm;
  const double p1 = from.lat() * std::numbers::pi / 180.0;
  const double l1 = from.lon() * std::numbers::pi / 180.0;
  const double p2 = std::asin(std::clamp(std::sin(p1) * std::cos(d) + std::cos(p1) * std::sin(d) * std::cos(bearing), -1.0, 1.0));
  const double l2 = l1 + std::atan2(std::sin(bearing) * std::sin(d) * std::cos(p1), std::cos(d) - std::sin(p1) * std::sin(p2));
  double lon = l2 * 180.0 / std::numbers::pi;
  lon = std::fmod(lon + 540.0, 360.0) - 180.0;
  return GeoPoint(p2 * 180.0 / std::numbers::pi, lon);
}

/// Radius of a disk holding three times `tiles` grid cells at `lat`.
double disk_radius_km(const GridSpec& grid, std::size_t tiles, double lat) {
  const double edge = grid.tile_size_deg() * std::numbers::pi / 180.0 * kEarthRadiusKm;
  const double area = edge * edge * std::cos(lat * std::numbers::pi / 180.0);
  return std::sqrt(3.0 * static_cast<double>(tiles) * area / std::numbers::pi);
}

std::vector<float> random_unit(rnd::Engine& rng, std::size_t dim) {
  std::vector<float> v(dim);
  double norm = 0;
  do {
    norm = 0;
    for (auto& x : v) {
      x = static_cast<float>(rnd::normal(rng));
      norm += double{x} * x;
    }
  } while (norm == 0.0);
  const double inv = 1.0 / std::sqrt(norm);
  for (auto& x : v) x = static_cast<float>(x * inv);
  return v;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
  return s;
}

/// `n` distinct words of `vocab` in random order.
std::vector<std::string> pick_words(const std::vector<std::string>& vocab, std::size_t n, rnd::Engine& rng) {
  std::vector<std::string> v = vocab;
  n = std::min(n, v.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(v[i], v[i + rnd::below(rng, v.size() - i)]);
  v.resize(n);
  return v;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto j = text.find(' ', i);
    out.push_back(text.substr(i, j == std::string::npos ? std::string::npos : j - i));
    if (j == std::string::npos) break;
    i = j + 1;
  }
  return out;
}

std::vector<SynthCluster> make_clusters(const SynthParams& p, const GridSpec& grid) {
  // fixed anchors for the disaster themes: England, California, Kansas
  const GeoPoint fixed[] = {GeoPoint(52.6, -1.6), GeoPoint(38.5, -121.0), GeoPoint(37.5, -100.5)};
  const DisasterCategory fixed_cat[] = {DisasterCategory::UK_Floods, DisasterCategory::US_Wildfires,
                                        DisasterCategory::US_Droughts};

  auto word_rng = rnd::make_engine(p.seed, kWords);
  std::set<std::string> used;
  for (const auto& t : themes()) used.insert(t.words.begin(), t.words.end());

  std::vector<SynthCluster> clusters(p.clusters);
  double max_radius = 0;
  for (std::size_t c = 0; c < p.clusters; ++c) {
    auto& cl = clusters[c];
    cl.id = static_cast<std::uint32_t>(c);
    cl.tiles = p.tiles / p.clusters + (c < p.tiles % p.clusters ? 1 : 0);
    if (c < themes().size()) {
      cl.theme = themes()[c].name;
      cl.vocabulary = themes()[c].words;
    } else {
      while (cl.vocabulary.size() < kWordsPerTheme) {
        auto w = made_up_word(word_rng);
        if (used.insert(w).second) cl.vocabulary.push_back(std::move(w));
      }
      cl.theme = "theme" + std::to_string(c);
    }
    if (c < std::size(fixed)) cl.category = fixed_cat[c];
    // largest disk, at the equator
    max_radius = std::max(max_radius, disk_radius_km(grid, cl.tiles, 0.0));
  }

  auto rng = rnd::make_engine(p.seed, kPlace);
  std::vector<GeoPoint> placed;
  for (std::size_t c = 0; c < p.clusters; ++c) {
    auto& cl = clusters[c];
    if (c < std::size(fixed)) {
      cl.centre = fixed[c];
    } else {
      bool ok = false;
      for (int attempt = 0; attempt < 20000 && !ok; ++attempt) {
        const double lat = std::asin(rnd::uniform(rng, std::sin(-55.0 * std::numbers::pi / 180.0),
                                                  std::sin(65.0 * std::numbers::pi / 180.0))) *
                           180.0 / std::numbers::pi;
        const GeoPoint cand(lat, rnd::uniform(rng, -180.0, 180.0));
        ok = std::all_of(placed.begin(), placed.end(), [&](const GeoPoint& q) {
          return haversine_km(cand, q) > 2.0 * max_radius + 50.0;
        });
        if (ok) cl.centre = cand;
      }
      if (!ok) throw InputError("cannot place " + std::to_string(p.clusters) + " non-overlapping clusters of this size");
    }
    cl.radius_km = disk_radius_km(grid, cl.tiles, cl.centre.lat());
    placed.push_back(cl.centre);
  }
  return clusters;
}

}  // namespace

void SynthParams::validate() const {
  if (tiles == 0) throw InputError("tiles must be positive");
  if (clusters == 0) throw InputError("clusters must be positive");
  if (clusters > tiles) throw InputError("more clusters than tiles");
  if (seasons < 1 || seasons > 4) throw InputError("seasons must be in 1..4");
  if (dim < 2) throw InputError("visual dim must be at least 2");
  if (text_dim < 2) throw InputError("text dim must be at least 2");
  if (!(noise >= 0.0) || !(season_spread >= 0.0) || !std::isfinite(noise) || !std::isfinite(season_spread)) {
    throw InputError("noise and season spread must be finite and non-negative");
  }
  if (proxy > entries()) throw InputError("proxy size exceeds the number of entries");
  for (double q : noise_levels) {
    if (!(q >= 0.0 && q <= 1.0)) throw InputError("noise levels must lie in [0, 1]");
  }
}

std::int64_t SynthWorld::cluster_of(const TileKey& key) const {
  const auto it = std::lower_bound(keys.begin(), keys.end(), key);
  if (it == keys.end() || *it != key) return -1;
  return key_cluster[static_cast<std::size_t>(it - keys.begin())];
}

std::vector<TileId> SynthWorld::tile_ids() const {
  std::vector<TileId> out;
  for (const auto& k : keys) {
    if (out.empty() || out.back() != k.tile) out.push_back(k.tile);
  }
  return out;
}

std::vector<EmbeddingVector> SynthWorld::visual_vectors(const std::vector<TileKey>& subset) const {
  std::vector<EmbeddingVector> out;
  out.reserve(subset.size());
  const auto dim = params.dim;
  for (const auto& k : subset) {
    const auto it = std::lower_bound(keys.begin(), keys.end(), k);
    if (it == keys.end() || *it != k) throw NotFoundError("key " + to_string(k) + " is not in the world");
    const auto* row = visual.data() + static_cast<std::size_t>(it - keys.begin()) * dim;
    out.emplace_back(std::vector<float>(row, row + dim));
  }
  return out;
}

SynthWorld generate_world(const SynthParams& params) {
  params.validate();
  SynthWorld w;
  w.params = params;
  w.clusters = make_clusters(params, w.grid);
  const auto dim = params.dim;

  // tiles: rejection sampling inside each cluster disk
  auto place_rng = rnd::make_engine(params.seed, kPlace + 1000);
  std::unordered_set<TileId, decltype([](const TileId& t) {
                       return std::hash<std::uint64_t>()((std::uint64_t{t.col} << 32) | t.row);
                     })>
      taken;
  std::vector<std::pair<TileId, std::uint32_t>> tiles;
  tiles.reserve(params.tiles);
  for (const auto& cl : w.clusters) {
    std::size_t got = 0;
    std::size_t attempts = 0;
    while (got < cl.tiles) {
      if (++attempts > 100 * cl.tiles + 1000) throw InputError("cluster disk too crowded to place tiles");
      const double d = cl.radius_km * std::sqrt(rnd::unit(place_rng));
      const double bearing = rnd::uniform(place_rng, 0.0, 2.0 * std::numbers::pi);
      const auto t = tile_of(w.grid, destination(cl.centre, d, bearing));
      if (taken.insert(t).second) {
        tiles.emplace_back(t, cl.id);
        ++got;
      }
    }
  }

  // every tile carries a latent description; its visual vector is the sum of
  // per-word visual vectors plus a per-season offset and isotropic noise
  auto desc_rng = rnd::make_engine(params.seed, kDescribe);
  std::vector<std::array<std::uint8_t, kDescriptionWords>> tile_words(tiles.size());
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    std::array<std::uint8_t, kWordsPerTheme> idx;
    std::iota(idx.begin(), idx.end(), std::uint8_t{0});
    for (std::size_t i = 0; i < kDescriptionWords; ++i) std::swap(idx[i], idx[i + rnd::below(desc_rng, kWordsPerTheme - i)]);
    std::copy_n(idx.begin(), kDescriptionWords, tile_words[t].begin());
  }
  auto description_of = [&](std::size_t t) {
    const auto& vocab = w.clusters[tiles[t].second].vocabulary;
    std::string s;
    for (auto i : tile_words[t]) s += (s.empty() ? "" : " ") + vocab[i];
    return s;
  };

  auto vis_rng = rnd::make_engine(params.seed, kVisual);
  std::vector<std::vector<std::vector<float>>> word_vec(w.clusters.size());
  std::vector<std::vector<std::vector<float>>> offset(w.clusters.size());
  for (std::size_t c = 0; c < w.clusters.size(); ++c) {
    for (std::size_t i = 0; i < kWordsPerTheme; ++i) word_vec[c].push_back(random_unit(vis_rng, dim));
    for (std::size_t s = 0; s < params.seasons; ++s) offset[c].push_back(random_unit(vis_rng, dim));
  }
  const double sigma = params.noise / std::sqrt(static_cast<double>(dim));
  const std::size_t n = params.entries();
  std::vector<TileKey> keys;
  std::vector<float> raw(n * dim);
  std::vector<std::uint32_t> raw_tile;
  keys.reserve(n);
  raw_tile.reserve(n);
  std::vector<double> base(dim);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const auto c = tiles[t].second;
    std::fill(base.begin(), base.end(), 0.0);
    for (auto i : tile_words[t]) {
      for (std::size_t d = 0; d < dim; ++d) base[d] += word_vec[c][i][d];
    }
    double norm = 0;
    for (double x : base) norm += x * x;
    const double inv = 1.0 / std::sqrt(norm);
    for (std::size_t s = 0; s < params.seasons; ++s) {
      float* row = raw.data() + keys.size() * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        row[d] = static_cast<float>(base[d] * inv + params.season_spread * offset[c][s][d] + sigma * rnd::normal(vis_rng));
      }
      keys.push_back(TileKey{tiles[t].first, static_cast<Season>(s)});
      raw_tile.push_back(static_cast<std::uint32_t>(t));
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&keys](auto a, auto b) { return keys[a] < keys[b]; });
  std::vector<std::uint32_t> key_tile;
  w.keys.reserve(n);
  w.key_cluster.reserve(n);
  key_tile.reserve(n);
  w.visual.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    w.keys.push_back(keys[order[i]]);
    key_tile.push_back(raw_tile[order[i]]);
    w.key_cluster.push_back(tiles[raw_tile[order[i]]].second);
    std::copy_n(raw.data() + order[i] * dim, dim, w.visual.data() + i * dim);
  }

  // proxy subset, described by its latent descriptions
  w.text_provider.kind = ProviderConfig::Kind::Synthetic;
  w.text_provider.dim = params.text_dim;
  w.text_provider.seed = params.text_seed;
  const std::size_t n_proxy =
      params.proxy ? params.proxy
                   : std::min(n, std::max(w.clusters.size(), static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n)))));
  const auto proxy_keys = sample_proxy(w.keys, n_proxy, rnd::make_engine(params.seed, kProxy)());
  std::vector<std::string> descriptions;
  descriptions.reserve(proxy_keys.size());
  for (const auto& k : proxy_keys) {
    const auto pos = static_cast<std::size_t>(std::lower_bound(w.keys.begin(), w.keys.end(), k) - w.keys.begin());
    descriptions.push_back(description_of(key_tile[pos]));
  }
  auto text_vecs = embed_texts(w.text_provider, descriptions);
  for (std::size_t i = 0; i < proxy_keys.size(); ++i) {
    w.proxy.push_back(ProxyRecord{proxy_keys[i], descriptions[i], std::move(text_vecs[i])});
  }

  // queries drawn from each cluster's vocabulary, truth at the cluster centre
  auto query_rng = rnd::make_engine(params.seed, kQueries);
  for (const auto& cl : w.clusters) {
    for (std::size_t j = 0; j < params.queries_per_cluster; ++j) {
      char id[32];
      std::snprintf(id, sizeof id, "c%02u-q%02zu", cl.id, j);
      w.queries.push_back(DisasterQuery{id, join_words(pick_words(cl.vocabulary, kQueryWords, query_rng)), cl.centre,
                                        cl.category});
      w.query_cluster.push_back(cl.id);
    }
  }

  // graded-noise alignment fixtures: word replacement at increasing rates
  if (params.alignment_keys > 0 && !params.noise_levels.empty()) {
    std::vector<TileKey> pk;
    const auto span = std::min<std::size_t>(std::max<std::size_t>(params.alignment_clusters, 1), w.clusters.size());
    for (const auto& r : w.proxy) {
      if (static_cast<std::size_t>(w.cluster_of(r.key)) < span) pk.push_back(r.key);
    }
    w.alignment_keys =
        sample_proxy(pk, std::min(params.alignment_keys, pk.size()), rnd::make_engine(params.seed, kAlignKeys)());
    // one draw and one made-up replacement word per position, shared by every
    // level, so each noisier fixture corrupts a superset of the previous one
    auto rng = rnd::make_engine(params.seed, kNoise);
    std::vector<std::vector<std::string>> clean, swap;
    std::vector<std::vector<double>> draw;
    for (const auto& k : w.alignment_keys) {
      const auto rec = std::lower_bound(w.proxy.begin(), w.proxy.end(), k,
                                        [](const ProxyRecord& r, const TileKey& key) { return r.key < key; });
      clean.push_back(split_words(rec->description));
      auto& d = draw.emplace_back();
      auto& sw = swap.emplace_back();
      for (std::size_t i = 0; i < clean.back().size(); ++i) {
        d.push_back(rnd::unit(rng));
        sw.push_back(made_up_word(rng));
      }
    }
    auto levels = params.noise_levels;
    std::sort(levels.begin(), levels.end());
    for (const double q : levels) {
      const int pct = static_cast<int>(std::lround(q * 100));
      char id[32];
      std::snprintf(id, sizeof id, "noise-%02d", pct);
      PromptCandidate prompt{id, "Describe the land cover visible in this tile. (synthetic, word noise " +
                                     std::to_string(pct) + "%)"};
      DescribeOracle::Table table;
      for (std::size_t i = 0; i < w.alignment_keys.size(); ++i) {
        auto words = clean[i];
        for (std::size_t j = 0; j < words.size(); ++j) {
          if (draw[i][j] < q) words[j] = swap[i][j];
        }
        table.emplace(w.alignment_keys[i], join_words(words));
      }
      w.prompt_descriptions.emplace(prompt.id, std::move(table));
      w.prompts.push_back(std::move(prompt));
    }
  }
  return w;
}

Index build_visual_index(const SynthWorld& world, const IndexParams& params) {
  return Index::build(world.keys, world.visual, world.params.dim, params);
}

void write_world(const SynthWorld& world, const std::filesystem::path& dir, const SynthOutput& out) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "alignment" / "descr", ec);
  if (ec) throw InputError("cannot create '" + dir.string() + "': " + ec.message());
  const auto dim = world.params.dim;

  if (out.write_manifest) {
    std::ofstream m(dir / "manifest.ndjson", std::ios::binary | std::ios::trunc);
    if (!m) throw InputError("cannot write manifest under '" + dir.string() + "'");
    for (std::size_t i = 0; i < world.keys.size(); ++i) {
      auto j = detail::key_to_json(world.keys[i]);
      j["embedding"] = std::vector<float>(world.visual.begin() + i * dim, world.visual.begin() + (i + 1) * dim);
      m << j.dump() << '\n';
    }
    if (!m) throw InputError("manifest write failed");
  }
  build_visual_index(world, out.index).save(dir / "visual.gqix");

  save_proxy(dir / "proxy.ndjson", world.proxy, world.text_provider.identity());
  std::vector<TileKey> proxy_keys;
  DescribeOracle::Table descriptions;
  for (const auto& r : world.proxy) {
    proxy_keys.push_back(r.key);
    descriptions.emplace(r.key, r.description);
  }
  write_keys(dir / "proxy_keys.json", proxy_keys);
  write_description_fixture(dir / "descriptions.json", descriptions);
  save_queries(dir / "queries.json", world.queries);

  json clusters = json::array();
  for (const auto& c : world.clusters) {
    clusters.push_back(json{{"id", c.id},
                            {"theme", c.theme},
                            {"category", std::string(to_string(c.category))},
                            {"centre", {{"lat", c.centre.lat()}, {"lon", c.centre.lon()}}},
                            {"radius_km", c.radius_km},
                            {"tiles", c.tiles},
                            {"vocabulary", c.vocabulary}});
  }
  std::string membership = "{\"seed\": " + std::to_string(world.params.seed) +
                           ", \"seasons\": " + std::to_string(world.params.seasons) +
                           ",\n\"clusters\": " + clusters.dump() + ",\n\"tiles\": [\n";
  const auto ids = world.tile_ids();
  for (std::size_t i = 0, k = 0; i < ids.size(); ++i) {
    while (world.keys[k].tile != ids[i]) ++k;
    membership += "[" + std::to_string(ids[i].col) + "," + std::to_string(ids[i].row) + "," +
                  std::to_string(world.key_cluster[k]) + "]" + (i + 1 < ids.size() ? ",\n" : "\n");
  }
  membership += "]}\n";
  detail::write_file(dir / "membership.json", membership);

  write_keys(dir / "alignment" / "keys.json", world.alignment_keys);
  json prompts = json::array();
  for (const auto& p : world.prompts) {
    prompts.push_back(json{{"id", p.id}, {"prompt", p.prompt_text}});
    write_description_fixture(dir / "alignment" / "descr" / (p.id + ".json"), world.prompt_descriptions.at(p.id));
  }
  detail::write_file(dir / "alignment" / "prompts.json", json{{"candidates", prompts}}.dump(2) + "\n");
}

}  // namespace geoquery
