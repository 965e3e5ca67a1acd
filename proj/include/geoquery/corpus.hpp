// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geoquery/embedding.hpp"
#include "geoquery/geo.hpp"
#include "geoquery/index.hpp"

namespace geoquery {

/// A described proxy tile.
struct ProxyRecord {
  TileKey key;
  std::string description;
  EmbeddingVector text_embedding;

  friend bool operator==(const ProxyRecord&, const ProxyRecord&) = default;
};

/// Loaded proxy subset plus the Exact text index over its embeddings.
/// An empty corpus has no text index.
struct ProxyCorpus {
  std::vector<ProxyRecord> records;  // ascending by key
  std::string provider_identity;
  std::size_t dim = 0;
  std::optional<Index> text_index;

  bool empty() const noexcept { return records.empty(); }
  /// Record for `key`, or nullptr.
  const ProxyRecord* find(const TileKey& key) const;
};

/// Description source. Fixture descriptions are keyed by prompt id; the
/// empty id holds descriptions that apply to every prompt.
struct DescribeOracle {
  enum class Kind { Fixture, Remote };
  using Table = std::map<TileKey, std::string>;

  Kind kind = Kind::Fixture;
  std::optional<std::filesystem::path> fixture_path;  // file, or directory of <prompt id>.json
  std::optional<std::string> endpoint_url;
  int timeout_ms = 10000;
  /// In-memory fixture tables, used instead of fixture_path when non-empty.
  std::map<std::string, Table> fixture_tables;

  static DescribeOracle from_fixture(const std::filesystem::path& path);
  static DescribeOracle from_tables(std::map<std::string, Table> tables);
  static DescribeOracle from_remote(std::string url, int timeout_ms = 10000);

  /// Throws InputError unless exactly one source is configured.
  void validate() const;
};

struct PromptCandidate {
  std::string id;
  std::string prompt_text;
};

/// Resolves descriptions for one prompt (or none). Fixture tables are read
/// once on construction.
class Describer {
 public:
  Describer(const DescribeOracle& oracle, const PromptCandidate* prompt = nullptr);

  /// Throws MissingDescriptionError or ProviderUnavailable.
  std::string describe(const TileKey& key) const;

 private:
  DescribeOracle::Kind kind_;
  std::string endpoint_url_;
  int timeout_ms_ = 0;
  std::optional<PromptCandidate> prompt_;
  std::shared_ptr<const DescribeOracle::Table> table_;
};

/// Reads a fixture file: {"descriptions":[{"col","row","season","description"}]}.
DescribeOracle::Table read_description_fixture(const std::filesystem::path& path);
void write_description_fixture(const std::filesystem::path& path, const DescribeOracle::Table& table);

/// Streams a newline-delimited JSON manifest of
/// {"col","row","season","embedding":[...]} records into an index. Errors
/// name the 1-based record ordinal.
Index ingest_visual(const std::filesystem::path& manifest, const IndexParams& params = {},
                    std::size_t batch_records = 4096);

/// Writes a manifest in the format ingest_visual reads.
void write_manifest(const std::filesystem::path& path, const std::vector<IndexEntry>& entries);

/// Uniform sample of n keys without replacement, sorted. Deterministic in
/// (set of keys, n, seed). Throws InputError if n == 0 or n > keys.size().
std::vector<TileKey> sample_proxy(std::vector<TileKey> keys, std::size_t n, std::uint64_t seed);

struct KeyFailure {
  TileKey key;
  std::string error_code;
  std::string message;
};

struct DescribeResult {
  std::vector<ProxyRecord> records;  // input order, failures omitted
  std::vector<KeyFailure> failures;
};

/// Describes then embeds every key, collecting per-key failures instead of
/// aborting. Output order follows input order.
DescribeResult describe_and_embed(const std::vector<TileKey>& keys, const DescribeOracle& oracle,
                                  const ProviderConfig& provider, int concurrency = 1,
                                  const PromptCandidate* prompt = nullptr);

/// NDJSON: one header line {"format":"geoquery-proxy","version":1,"dim",
/// "count","provider"} followed by {"col","row","season","description",
/// "text_embedding"} records.
void save_proxy(const std::filesystem::path& path, const std::vector<ProxyRecord>& records,
                const std::string& provider_identity);

/// Loads and validates a proxy file and builds its text index. When
/// `visual` is given, every record key must resolve in it.
ProxyCorpus load_proxy(const std::filesystem::path& path, const Index* visual = nullptr);

/// Builds a ProxyCorpus directly from records (same validation as load).
ProxyCorpus make_proxy_corpus(std::vector<ProxyRecord> records, std::string provider_identity,
                              const Index* visual = nullptr);

/// Reads/writes a key list: {"keys":[{"col","row","season"}...]}.
std::vector<TileKey> read_keys(const std::filesystem::path& path);
void write_keys(const std::filesystem::path& path, const std::vector<TileKey>& keys);

}  // namespace geoquery
