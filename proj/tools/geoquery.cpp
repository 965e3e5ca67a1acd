// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

// geoquery: ingest, build proxies, score prompts, query, evaluate and serve.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 provider error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geoquery/alignment.hpp"
#include "geoquery/corpus.hpp"
#include "geoquery/error.hpp"
#include "geoquery/eval.hpp"
#include "geoquery/search.hpp"
#include "geoquery/service.hpp"
#include "geoquery/synth.hpp"
#include "json.hpp"

namespace {

using namespace geoquery;
using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

struct ProviderFlags {
  std::string kind = "synthetic";
  std::string url;
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  int timeout_ms = 10000;

  void add(CLI::App* app) {
    app->add_option("--provider", kind, "Embedding provider")->check(CLI::IsMember({"synthetic", "remote"}));
    app->add_option("--provider-url", url, "Remote embedding endpoint");
    app->add_option("--provider-dim", dim, "Embedding dimension");
    app->add_option("--provider-seed", seed, "Synthetic provider seed");
    app->add_option("--provider-timeout-ms", timeout_ms, "Remote request timeout");
  }

  ProviderConfig config() const {
    ProviderConfig p;
    p.kind = kind == "remote" ? ProviderConfig::Kind::Remote : ProviderConfig::Kind::Synthetic;
    if (!url.empty()) p.endpoint_url = url;
    p.dim = dim;
    p.seed = seed;
    p.timeout_ms = timeout_ms;
    try {
      p.validate();
    } catch (const InputError& e) {
      throw ConfigError(std::string("provider: ") + e.what());
    }
    return p;
  }
};

struct OracleFlags {
  std::string fixture;
  std::string url;
  int timeout_ms = 10000;

  void add(CLI::App* app) {
    app->add_option("--fixtures", fixture, "Description fixture file, or directory of <prompt id>.json");
    app->add_option("--oracle-url", url, "Remote description oracle endpoint");
    app->add_option("--oracle-timeout-ms", timeout_ms, "Remote oracle timeout");
  }

  DescribeOracle oracle() const {
    if (fixture.empty() == url.empty()) throw ConfigError("give exactly one of --fixtures or --oracle-url");
    return fixture.empty() ? DescribeOracle::from_remote(url, timeout_ms) : DescribeOracle::from_fixture(fixture);
  }
};

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write '" + out + "'");
  f << text;
}

void warn_provider_mismatch(const ProxyCorpus& proxy, const ProviderConfig& provider) {
  if (proxy.provider_identity != provider.identity()) {
    std::cerr << "warning: proxy was embedded with " << proxy.provider_identity << " but queries use "
              << provider.identity() << "\n";
  }
}

Season season_arg(const std::string& s) {
  const auto season = parse_season(s);
  if (!season) throw ConfigError("season must be one of Q1..Q4, got '" + s + "'");
  return *season;
}

int exit_code_for(const Error& e) {
  const auto& code = e.code();
  if (code == "ProviderUnavailable") return kExitProvider;
  if (code == "ConfigError") return kExitUsage;
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GeoQuery two-stage cross-modal retrieval over a global tile grid"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::function<void()> action;

  // ---- ingest
  std::string manifest, index_path, out;
  std::string backend = "exact";
  std::uint32_t n_clusters = 0, n_probe = 0;
  bool no_bounded = false;
  std::uint64_t index_seed = IndexParams{}.seed;
  std::size_t batch = 4096;
  auto index_params = [&] {
    IndexParams p;
    p.backend = backend == "pruned" ? IndexParams::Backend::PrunedClusters : IndexParams::Backend::Exact;
    if (n_clusters) p.n_clusters = n_clusters;
    if (n_probe) p.n_probe = n_probe;
    p.bounded_probe = !no_bounded;
    p.seed = index_seed;
    return p;
  };
  auto add_index_flags = [&](CLI::App* c) {
    c->add_option("--backend", backend, "Index backend")->check(CLI::IsMember({"exact", "pruned"}));
    c->add_option("--index-clusters", n_clusters, "Pruned backend cluster count (0 = ceil(sqrt(N)))");
    c->add_option("--index-probe", n_probe, "Pruned backend probe count (0 = ceil(sqrt(clusters)))");
    c->add_flag("--no-bounded-probe", no_bounded, "Scan only the n_probe nearest clusters");
    c->add_option("--index-seed", index_seed, "Cluster training seed");
  };
  {
    auto* c = app.add_subcommand("ingest", "Stream an NDJSON visual manifest into an index file");
    c->add_option("--manifest", manifest, "NDJSON manifest of {col,row,season,embedding}")->required();
    c->add_option("--out", out, "Index file to write")->required();
    c->add_option("--batch", batch, "Records per ingestion batch");
    add_index_flags(c);
    c->callback([&] {
      action = [&] {
        const auto index = ingest_visual(manifest, index_params(), batch);
        index.save(out);
        json j{{"entries", index.size()},
               {"dim", index.dim()},
               {"backend", backend},
               {"n_clusters", index.n_clusters()},
               {"n_probe", index.n_probe()},
               {"out", out}};
        emit(j.dump(2) + "\n", "");
      };
    });
  }

  // ---- sample-proxy
  std::size_t sample_n = 0;
  std::uint64_t seed = 0;
  {
    auto* c = app.add_subcommand("sample-proxy", "Sample the proxy key subset from an index");
    c->add_option("--index", index_path, "Visual index file")->required();
    c->add_option("--n", sample_n, "Number of keys to sample")->required();
    c->add_option("--seed", seed, "Sampling seed");
    c->add_option("--out", out, "Key list to write (default stdout)");
    c->callback([&] {
      action = [&] {
        const auto index = Index::load(index_path);
        const std::vector<TileKey> keys(index.keys().begin(), index.keys().end());
        const auto picked = sample_proxy(keys, sample_n, seed);
        if (out.empty()) {
          json arr = json::array();
          for (const auto& k : picked) arr.push_back({{"col", k.tile.col}, {"row", k.tile.row}, {"season", to_string(k.season)}});
          emit(json{{"keys", arr}}.dump(2) + "\n", "");
        } else {
          write_keys(out, picked);
        }
      };
    });
  }

  // ---- describe
  std::string keys_path, proxy_path, failures_path, prompt_id;
  int concurrency = 4;
  ProviderFlags provider;
  OracleFlags oracle;
  {
    auto* c = app.add_subcommand("describe", "Describe and embed proxy keys into a proxy file");
    c->add_option("--keys", keys_path, "Key list from sample-proxy")->required();
    c->add_option("--out", out, "Proxy NDJSON file to write")->required();
    c->add_option("--index", index_path, "Visual index for a referential check");
    c->add_option("--prompt-id", prompt_id, "Prompt id selecting a fixture table");
    c->add_option("--concurrency", concurrency, "Concurrent describe requests");
    c->add_option("--failures", failures_path, "Write per-key failures here");
    oracle.add(c);
    provider.add(c);
    c->callback([&] {
      action = [&] {
        const auto keys = read_keys(keys_path);
        const auto orc = oracle.oracle();
        const auto prov = provider.config();
        std::optional<PromptCandidate> prompt;
        if (!prompt_id.empty()) prompt = PromptCandidate{prompt_id, prompt_id};
        auto res = describe_and_embed(keys, orc, prov, concurrency, prompt ? &*prompt : nullptr);
        if (!failures_path.empty()) {
          json f = json::array();
          for (const auto& k : res.failures) {
            f.push_back({{"col", k.key.tile.col}, {"row", k.key.tile.row}, {"season", to_string(k.key.season)},
                         {"error_code", k.error_code}, {"message", k.message}});
          }
          emit(json{{"failures", f}}.dump(2) + "\n", failures_path);
        }
        std::cerr << "described " << res.records.size() << " of " << keys.size() << " keys ("
                  << res.failures.size() << " failed)\n";
        if (res.records.empty()) throw InputError("every key failed to describe");
        if (!index_path.empty()) {
          const auto index = Index::load(index_path);
          make_proxy_corpus(res.records, prov.identity(), &index);
        }
        std::sort(res.records.begin(), res.records.end(),
                  [](const ProxyRecord& a, const ProxyRecord& b) { return a.key < b.key; });
        save_proxy(out, res.records, prov.identity());
      };
    });
  }

  // ---- align
  std::string candidates_path;
  std::optional<std::size_t> n_pairs;
  {
    auto* c = app.add_subcommand("align", "Rank description prompts by text/visual rank correlation");
    c->add_option("--candidates", candidates_path, "Prompt candidates JSON")->required();
    c->add_option("--keys", keys_path, "Keys to describe (default: alignment/keys.json beside --fixtures)");
    c->add_option("--index", index_path, "Visual index holding the keys' vectors")->required();
    c->add_option("--pairs", n_pairs, "Number of sampled pairs (default 50 per key)");
    c->add_option("--seed", seed, "Pair sampling seed");
    c->add_option("--out", out, "Ranking JSON to write (default stdout)");
    oracle.add(c);
    provider.add(c);
    c->callback([&] {
      action = [&] {
        const auto candidates = read_prompt_candidates(candidates_path);
        auto kp = keys_path;
        if (kp.empty() && !oracle.fixture.empty()) kp = (fs::path(oracle.fixture).parent_path() / "keys.json").string();
        if (kp.empty()) throw ConfigError("--keys is required with --oracle-url");
        const auto keys = read_keys(kp);
        const auto index = Index::load(index_path);
        std::vector<EmbeddingVector> visual;
        for (const auto& k : keys) {
          const auto v = index.vector_of(k);
          if (v.empty()) throw NotFoundError("key " + to_string(k) + " is not in the visual index");
          visual.emplace_back(std::vector<float>(v.begin(), v.end()));
        }
        const auto sample = sample_pairs(keys.size(), seed, n_pairs);
        const auto ranking = rank_prompts(candidates, keys, oracle.oracle(), provider.config(), visual, sample);
        json ranked = json::array(), failed = json::array();
        for (const auto& o : ranking.ranked) {
          ranked.push_back({{"id", o.candidate_id}, {"rho", o.score->rho}, {"n_pairs", o.score->n_pairs}});
        }
        for (const auto& o : ranking.failed) {
          failed.push_back({{"id", o.candidate_id}, {"error_code", o.error_code}, {"message", o.message}});
        }
        json j{{"seed", seed}, {"n_keys", keys.size()}, {"n_pairs", sample.pairs.size()},
               {"ranked", ranked}, {"failed", failed}};
        emit(j.dump(2) + "\n", out);
      };
    });
  }

  // ---- query
  std::string text, config_name = "balanced_large", season;
  std::size_t top_n = 0;
  {
    auto* c = app.add_subcommand("query", "Run a two-stage text query");
    c->add_option("--index", index_path, "Visual index file")->required();
    c->add_option("--proxy", proxy_path, "Proxy NDJSON file")->required();
    c->add_option("--text", text, "Query text")->required();
    c->add_option("--config", config_name, "Preset name or custom:KT:KI");
    c->add_option("--season", season, "Restrict stage 2 to one season (Q1..Q4)");
    c->add_option("--top-n", top_n, "Truncate the fused list (0 = keep all)");
    provider.add(c);
    c->callback([&] {
      action = [&] {
        const auto cfg = resolve_config(config_name);
        const auto prov = provider.config();
        QueryOptions opts;
        if (!season.empty()) opts.season = season_arg(season);
        const auto index = Index::load(index_path);
        const auto proxy = load_proxy(proxy_path, &index);
        warn_provider_mismatch(proxy, prov);
        auto result = two_stage_query(text, cfg, SearchEngine{&proxy, &index, prov}, opts);
        if (top_n && result.results.size() > top_n) result.results.resize(top_n);
        emit(to_json(result).dump(2) + "\n", "");
      };
    });
  }

  // ---- similar
  std::uint32_t col = 0, row = 0;
  std::size_t k = 10;
  {
    auto* c = app.add_subcommand("similar", "Nearest visual neighbours of a stored tile");
    c->add_option("--index", index_path, "Visual index file")->required();
    c->add_option("--col", col, "Tile column")->required();
    c->add_option("--row", row, "Tile row")->required();
    c->add_option("--season", season, "Tile season")->required();
    c->add_option("--k", k, "Neighbour count");
    c->callback([&] {
      action = [&] {
        const auto index = Index::load(index_path);
        const auto res = similar_by_tile(TileKey{{col, row}, season_arg(season)}, k, index);
        json arr = json::array();
        for (const auto& n : res) arr.push_back(to_json(n));
        emit(json{{"results", arr}}.dump(2) + "\n", "");
      };
    });
  }

  // ---- eval
  std::string queries_path, configs = "all", format = "markdown", outcomes_path, save_outcomes;
  std::size_t eval_top_n = kDefaultTopN;
  bool extended = false;
  int threads = 1;
  {
    auto* c = app.add_subcommand("eval", "Run the configuration ablation over a disaster query set");
    c->add_option("--queries", queries_path, "Disaster query JSON");
    c->add_option("--index", index_path, "Visual index file");
    c->add_option("--proxy", proxy_path, "Proxy NDJSON file");
    c->add_option("--configs", configs, "'all' or a comma list of preset / custom:KT:KI names");
    c->add_option("--top-n", eval_top_n, "Results inspected per query");
    c->add_option("--format", format, "Report style")->check(CLI::IsMember({"markdown", "csv", "json"}));
    c->add_option("--out", out, "Report file (default stdout)");
    c->add_flag("--extended", extended, "Add median distance, query and error counts to text reports");
    c->add_option("--threads", threads, "Concurrent queries");
    c->add_option("--outcomes", outcomes_path, "Aggregate recorded outcomes instead of running queries");
    c->add_option("--save-outcomes", save_outcomes, "Record per-query outcomes here");
    provider.add(c);
    c->callback([&] {
      action = [&] {
        std::vector<ConfigOutcomes> runs;
        if (!outcomes_path.empty()) {
          std::ifstream in(outcomes_path);
          if (!in) throw InputError("cannot open '" + outcomes_path + "'");
          json doc;
          try {
            doc = json::parse(in);
          } catch (const json::parse_error& e) {
            throw FormatError(outcomes_path + ": " + e.what());
          }
          for (const auto& r : doc.at("runs")) {
            ConfigOutcomes run{resolve_config(r.at("config").get<std::string>()), {}};
            for (const auto& o : r.at("outcomes")) run.outcomes.push_back(outcome_from_json(o));
            runs.push_back(std::move(run));
          }
        } else {
          if (queries_path.empty() || index_path.empty() || proxy_path.empty()) {
            throw ConfigError("eval needs --queries, --index and --proxy (or --outcomes)");
          }
          std::vector<SearchConfig> cfgs;
          if (configs == "all") {
            cfgs = preset_configs();
          } else {
            std::stringstream ss(configs);
            for (std::string name; std::getline(ss, name, ',');) cfgs.push_back(resolve_config(name));
          }
          const auto prov = provider.config();
          const auto queries = load_queries(queries_path);
          const auto index = Index::load(index_path);
          const auto proxy = load_proxy(proxy_path, &index);
          warn_provider_mismatch(proxy, prov);
          runs = run_queries(queries, cfgs, SearchEngine{&proxy, &index, prov}, GridSpec(), eval_top_n, threads);
        }
        if (!save_outcomes.empty()) {
          json arr = json::array();
          for (const auto& r : runs) {
            json outs = json::array();
            for (const auto& o : r.outcomes) outs.push_back(to_json(o));
            arr.push_back({{"config", r.config.name}, {"outcomes", outs}});
          }
          emit(json{{"runs", arr}}.dump(2) + "\n", save_outcomes);
        }
        const auto report = aggregate(runs, eval_top_n);
        emit(format_report(report, *parse_report_style(format), extended), out);
      };
    });
  }

  // ---- serve
  std::string service_config, listen, default_config, cors;
  {
    auto* c = app.add_subcommand("serve", "Serve the /v1 HTTP API");
    c->add_option("--config", service_config, "Service config file (JSON or TOML-style)");
    c->add_option("--index", index_path, "Visual index file");
    c->add_option("--proxy", proxy_path, "Proxy NDJSON file");
    c->add_option("--listen", listen, "host:port (overrides the config file)");
    c->add_option("--default-config", default_config, "Default search preset");
    c->add_option("--cors", cors, "Comma list of allowed origins, or *");
    provider.add(c);
    c->callback([&] {
      action = [&] {
        ServiceConfig cfg = service_config.empty() ? ServiceConfig{} : ServiceConfig::from_file(service_config);
        if (service_config.empty()) cfg.provider = provider.config();
        if (!index_path.empty()) cfg.visual_index_path = index_path;
        if (!proxy_path.empty()) cfg.proxy_path = proxy_path;
        if (!listen.empty()) cfg.listen_addr = listen;
        if (!default_config.empty()) cfg.default_config_name = default_config;
        if (!cors.empty()) {
          std::stringstream ss(cors);
          cfg.cors_allowed_origins.clear();
          for (std::string o; std::getline(ss, o, ',');) cfg.cors_allowed_origins.push_back(o);
        }
        cfg.apply_environment();
        cfg.validate();
        static Service* running = nullptr;
        Service service(cfg);
        const int port = service.bind();
        std::cerr << "loading corpora...\n";
        service.load();
        std::cerr << "listening on " << parse_listen_addr(cfg.listen_addr).first << ":" << port << "\n";
        running = &service;
        std::signal(SIGINT, [](int) { if (running) running->stop(); });
        std::signal(SIGTERM, [](int) { if (running) running->stop(); });
        service.run();
        running = nullptr;
      };
    });
  }

  // ---- synth-world
  SynthParams sp;
  bool no_manifest = false;
  {
    auto* c = app.add_subcommand("synth-world", "Generate a planted-cluster synthetic world");
    c->add_option("--tiles", sp.tiles, "Number of tiles");
    c->add_option("--clusters", sp.clusters, "Number of planted clusters");
    c->add_option("--seasons", sp.seasons, "Seasons per tile (1..4)");
    c->add_option("--dim", sp.dim, "Visual embedding dimension");
    c->add_option("--text-dim", sp.text_dim, "Text embedding dimension");
    c->add_option("--seed", sp.seed, "World seed");
    c->add_option("--text-seed", sp.text_seed, "Synthetic text provider seed");
    c->add_option("--proxy", sp.proxy, "Proxy subset size (0 = 5% of entries)");
    c->add_option("--queries-per-cluster", sp.queries_per_cluster, "Queries drawn per cluster");
    c->add_option("--noise", sp.noise, "Visual noise norm");
    c->add_option("--alignment-keys", sp.alignment_keys, "Keys in the alignment fixtures");
    c->add_flag("--no-manifest", no_manifest, "Skip the NDJSON visual manifest");
    c->add_option("--out", out, "Output directory")->required();
    add_index_flags(c);
    c->callback([&] {
      action = [&] {
        const auto world = generate_world(sp);
        write_world(world, out, SynthOutput{!no_manifest, index_params()});
        json j{{"out", out}, {"entries", world.keys.size()}, {"clusters", world.clusters.size()},
               {"proxy", world.proxy.size()}, {"queries", world.queries.size()},
               {"provider", world.text_provider.identity()}};
        emit(j.dump(2) + "\n", "");
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: [" << e.code() << "] " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
