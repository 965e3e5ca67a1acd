// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "geoquery/error.hpp"
#include "geoquery/random.hpp"
#include "http_client.hpp"
#include "json_util.hpp"

namespace geoquery {

using detail::json;

namespace {

constexpr const char* kProxyFormat = "geoquery-proxy";
constexpr int kProxyVersion = 1;
constexpr std::size_t kEmbedBatch = 64;

std::string record_at(std::size_t ordinal) { return "record " + std::to_string(ordinal); }

}  // namespace

const ProxyRecord* ProxyCorpus::find(const TileKey& key) const {
  auto it = std::lower_bound(records.begin(), records.end(), key,
                             [](const ProxyRecord& r, const TileKey& k) { return r.key < k; });
  return it != records.end() && it->key == key ? &*it : nullptr;
}

// ---- describe oracles ------------------------------------------------------

DescribeOracle DescribeOracle::from_fixture(const std::filesystem::path& path) {
  DescribeOracle o;
  o.kind = Kind::Fixture;
  o.fixture_path = path;
  return o;
}

DescribeOracle DescribeOracle::from_tables(std::map<std::string, Table> tables) {
  DescribeOracle o;
  o.kind = Kind::Fixture;
  o.fixture_tables = std::move(tables);
  return o;
}

DescribeOracle DescribeOracle::from_remote(std::string url, int timeout_ms) {
  DescribeOracle o;
  o.kind = Kind::Remote;
  o.endpoint_url = std::move(url);
  o.timeout_ms = timeout_ms;
  return o;
}

void DescribeOracle::validate() const {
  const int sources = (fixture_path ? 1 : 0) + (!fixture_tables.empty() ? 1 : 0) + (endpoint_url ? 1 : 0);
  if (sources != 1) throw InputError("describe oracle needs exactly one source");
  if (kind == Kind::Remote && !endpoint_url) throw InputError("remote describe oracle needs endpoint_url");
  if (kind == Kind::Fixture && endpoint_url) throw InputError("fixture describe oracle has an endpoint_url");
  if (timeout_ms <= 0) throw InputError("describe oracle timeout must be positive");
}

DescribeOracle::Table read_description_fixture(const std::filesystem::path& path) {
  const auto doc = detail::parse_json_file(path);
  if (!doc.is_object() || !doc.contains("descriptions") || !doc["descriptions"].is_array()) {
    throw FormatError(path.string() + ": expected {\"descriptions\": [...]}");
  }
  DescribeOracle::Table table;
  std::size_t ordinal = 0;
  for (const auto& item : doc["descriptions"]) {
    ++ordinal;
    const auto where = path.string() + " " + record_at(ordinal);
    const auto key = detail::key_from_json(item, where);
    if (!item.contains("description") || !item["description"].is_string()) {
      throw FormatError(where + ": 'description' must be a string");
    }
    if (!table.emplace(key, item["description"].get<std::string>()).second) {
      throw DuplicateKeyError(where + ": duplicate key " + to_string(key));
    }
  }
  return table;
}

void write_description_fixture(const std::filesystem::path& path, const DescribeOracle::Table& table) {
  json items = json::array();
  for (const auto& [key, text] : table) {
    auto j = detail::key_to_json(key);
    j["description"] = text;
    items.push_back(std::move(j));
  }
  std::string out = "{\"descriptions\": [\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += "  " + items[i].dump() + (i + 1 < items.size() ? ",\n" : "\n");
  }
  out += "]}\n";
  detail::write_file(path, out);
}

Describer::Describer(const DescribeOracle& oracle, const PromptCandidate* prompt)
    : kind_(oracle.kind), endpoint_url_(oracle.endpoint_url.value_or("")), timeout_ms_(oracle.timeout_ms) {
  oracle.validate();
  if (prompt) prompt_ = *prompt;
  if (kind_ == DescribeOracle::Kind::Remote) return;

  const std::string prompt_id = prompt ? prompt->id : std::string();
  if (!oracle.fixture_tables.empty()) {
    auto it = oracle.fixture_tables.find(prompt_id);
    if (it == oracle.fixture_tables.end()) it = oracle.fixture_tables.find("");
    if (it == oracle.fixture_tables.end()) {
      throw MissingDescriptionError("no fixture table for prompt '" + prompt_id + "'");
    }
    table_ = std::make_shared<const DescribeOracle::Table>(it->second);
    return;
  }
  auto path = *oracle.fixture_path;
  if (std::filesystem::is_directory(path)) {
    if (!prompt) throw InputError("a fixture directory requires a prompt candidate");
    path /= prompt->id + ".json";
    if (!std::filesystem::exists(path)) {
      throw MissingDescriptionError("no fixture file '" + path.string() + "'");
    }
  }
  table_ = std::make_shared<const DescribeOracle::Table>(read_description_fixture(path));
}

std::string Describer::describe(const TileKey& key) const {
  if (table_) {
    auto it = table_->find(key);
    if (it == table_->end() || it->second.empty()) {
      throw MissingDescriptionError("no description for " + to_string(key));
    }
    return it->second;
  }
  json body = detail::key_to_json(key);
  if (prompt_) {
    body["prompt_id"] = prompt_->id;
    body["prompt"] = prompt_->prompt_text;
  }
  const auto res = detail::post_json(endpoint_url_, body, timeout_ms_);
  if (!res.is_object() || !res.contains("description") || !res["description"].is_string() ||
      res["description"].get<std::string>().empty()) {
    throw MissingDescriptionError("describe service returned no description for " + to_string(key));
  }
  return res["description"].get<std::string>();
}

// ---- visual manifest -------------------------------------------------------

Index ingest_visual(const std::filesystem::path& manifest, const IndexParams& params,
                    std::size_t batch_records) {
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot open manifest '" + manifest.string() + "'");
  batch_records = std::max<std::size_t>(batch_records, 1);

  std::vector<TileKey> keys;
  std::vector<float> matrix;
  std::unordered_set<TileKey, TileKeyHash> seen;
  std::size_t dim = 0;
  std::size_t ordinal = 0;
  std::string line;
  std::vector<float> row;

  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++ordinal;
    const auto where = record_at(ordinal);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": " + e.what(), ordinal);
    }
    TileKey key;
    try {
      key = detail::key_from_json(j, where);
    } catch (const FormatError& e) {
      throw FormatError(e.what(), ordinal);
    }
    if (!j.contains("embedding") || !j["embedding"].is_array() || j["embedding"].empty()) {
      throw FormatError(where + ": 'embedding' must be a non-empty array", ordinal);
    }
    const auto& emb = j["embedding"];
    if (dim == 0) dim = emb.size();
    if (emb.size() != dim) {
      throw DimensionError(where + ": embedding has dim " + std::to_string(emb.size()) +
                           ", expected " + std::to_string(dim));
    }
    row.clear();
    for (const auto& x : emb) {
      if (!x.is_number()) throw FormatError(where + ": non-numeric embedding component", ordinal);
      row.push_back(x.get<float>());
    }
    if (std::all_of(row.begin(), row.end(), [](float v) { return v == 0.0f; })) {
      throw DegenerateVectorError(where + ": zero embedding");
    }
    if (!seen.insert(key).second) {
      throw DuplicateKeyError(where + ": duplicate key " + to_string(key));
    }
    // grow in whole batches so peak memory stays at index + one batch
    if (keys.size() == keys.capacity()) {
      keys.reserve(keys.size() + batch_records);
      matrix.reserve((keys.size() + batch_records) * dim);
    }
    keys.push_back(key);
    matrix.insert(matrix.end(), row.begin(), row.end());
  }
  if (keys.empty()) throw InputError("manifest '" + manifest.string() + "' has no records");
  seen.clear();
  return Index::build(std::move(keys), std::move(matrix), dim, params);
}

void write_manifest(const std::filesystem::path& path, const std::vector<IndexEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  for (const auto& e : entries) {
    auto j = detail::key_to_json(e.key);
    j["embedding"] = std::vector<float>(e.vector.values().begin(), e.vector.values().end());
    out << j.dump() << '\n';
  }
  if (!out) throw InputError("write to '" + path.string() + "' failed");
}

// ---- proxy sampling and description ---------------------------------------

std::vector<TileKey> sample_proxy(std::vector<TileKey> keys, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InputError("proxy sample size must be positive");
  if (n > keys.size()) {
    throw InputError("cannot sample " + std::to_string(n) + " of " + std::to_string(keys.size()) + " keys");
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw DuplicateKeyError("duplicate key in proxy sampling input");
  }
  auto rng = rnd::make_engine(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(keys[i], keys[i + rnd::below(rng, keys.size() - i)]);
  keys.resize(n);
  std::sort(keys.begin(), keys.end());
  return keys;
}

DescribeResult describe_and_embed(const std::vector<TileKey>& keys, const DescribeOracle& oracle,
                                  const ProviderConfig& provider, int concurrency,
                                  const PromptCandidate* prompt) {
  provider.validate();
  const Describer describer(oracle, prompt);

  const std::size_t n = keys.size();
  std::vector<std::optional<std::string>> texts(n);
  std::vector<std::optional<KeyFailure>> failed(n);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        texts[i] = describer.describe(keys[i]);
      } catch (const Error& e) {
        failed[i] = KeyFailure{keys[i], e.code(), e.what()};
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(concurrency, 1, 64));
  if (workers == 1 || n < 2) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
  }

  std::vector<std::optional<EmbeddingVector>> vectors(n);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    if (texts[i]) pending.push_back(i);
  }
  for (std::size_t b = 0; b < pending.size(); b += kEmbedBatch) {
    const auto end = std::min(pending.size(), b + kEmbedBatch);
    std::vector<std::string> batch;
    for (auto p = b; p < end; ++p) batch.push_back(*texts[pending[p]]);
    try {
      auto out = embed_texts(provider, batch);
      for (auto p = b; p < end; ++p) vectors[pending[p]] = std::move(out[p - b]);
    } catch (const Error& e) {
      for (auto p = b; p < end; ++p) failed[pending[p]] = KeyFailure{keys[pending[p]], e.code(), e.what()};
    }
  }

  DescribeResult result;
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) {
      result.failures.push_back(std::move(*failed[i]));
    } else {
      result.records.push_back(ProxyRecord{keys[i], std::move(*texts[i]), std::move(*vectors[i])});
    }
  }
  return result;
}

// ---- proxy persistence -----------------------------------------------------

void save_proxy(const std::filesystem::path& path, const std::vector<ProxyRecord>& records,
                const std::string& provider_identity) {
  if (records.empty()) throw InputError("refusing to save an empty proxy corpus");
  const auto dim = records.front().text_embedding.dim();
  for (const auto& r : records) {
    if (r.text_embedding.dim() != dim) throw DimensionError("proxy records have mixed dims");
    if (r.description.empty()) throw InputError("empty description for " + to_string(r.key));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << json{{"format", kProxyFormat},
              {"version", kProxyVersion},
              {"dim", dim},
              {"count", records.size()},
              {"provider", provider_identity}}
             .dump()
      << '\n';
  for (const auto& r : records) {
    auto j = detail::key_to_json(r.key);
    j["description"] = r.description;
    j["text_embedding"] = std::vector<float>(r.text_embedding.values().begin(), r.text_embedding.values().end());
    out << j.dump() << '\n';
  }
  if (!out) throw InputError("write to '" + path.string() + "' failed");
}

ProxyCorpus make_proxy_corpus(std::vector<ProxyRecord> records, std::string provider_identity,
                              const Index* visual) {
  ProxyCorpus corpus;
  corpus.provider_identity = std::move(provider_identity);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i > 0 && records[i - 1].key == r.key) throw DuplicateKeyError("duplicate proxy key " + to_string(r.key));
    if (r.description.empty()) throw InputError("empty description for " + to_string(r.key));
    if (r.text_embedding.dim() != records.front().text_embedding.dim()) {
      throw DimensionError("proxy records have mixed dims");
    }
    if (visual && !visual->contains(r.key)) {
      throw NotFoundError("proxy key " + to_string(r.key) + " is not in the visual index");
    }
  }
  if (!records.empty()) {
    corpus.dim = records.front().text_embedding.dim();
    std::vector<IndexEntry> entries;
    entries.reserve(records.size());
    for (const auto& r : records) entries.push_back({r.key, r.text_embedding});
    corpus.text_index = Index::build(std::move(entries));
  }
  corpus.records = std::move(records);
  return corpus;
}

ProxyCorpus load_proxy(const std::filesystem::path& path, const Index* visual) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open proxy file '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw FormatError("empty proxy file", 1);
  ++line_no;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("proxy header: ") + e.what(), line_no);
  }
  if (!header.is_object() || header.value("format", "") != kProxyFormat) {
    throw FormatError("not a geoquery-proxy file", line_no);
  }
  if (!header.contains("version") || !header["version"].is_number_integer()) {
    throw FormatError("proxy header lacks a version", line_no);
  }
  if (header["version"].get<int>() != kProxyVersion) {
    throw VersionError("proxy format version " + std::to_string(header["version"].get<int>()) +
                       " unsupported (expected " + std::to_string(kProxyVersion) + ")");
  }
  if (!header.contains("dim") || !header["dim"].is_number_unsigned() || header["dim"].get<std::size_t>() == 0 ||
      !header.contains("count") || !header["count"].is_number_unsigned() ||
      !header.contains("provider") || !header["provider"].is_string()) {
    throw FormatError("proxy header needs dim > 0, count and provider", line_no);
  }
  const auto dim = header["dim"].get<std::size_t>();
  const auto count = header["count"].get<std::size_t>();

  std::vector<ProxyRecord> records;
  records.reserve(count);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("proxy record: ") + e.what(), line_no);
    }
    const auto where = "line " + std::to_string(line_no);
    TileKey key;
    try {
      key = detail::key_from_json(j, where);
    } catch (const FormatError& e) {
      throw FormatError(e.what(), line_no);
    }
    if (!j.contains("description") || !j["description"].is_string() || j["description"].get<std::string>().empty()) {
      throw FormatError("proxy record needs a non-empty description", line_no);
    }
    if (!j.contains("text_embedding") || !j["text_embedding"].is_array() || j["text_embedding"].size() != dim) {
      throw FormatError("text_embedding must have " + std::to_string(dim) + " components", line_no);
    }
    std::vector<float> v;
    v.reserve(dim);
    for (const auto& x : j["text_embedding"]) {
      if (!x.is_number()) throw FormatError("non-numeric text_embedding component", line_no);
      v.push_back(x.get<float>());
    }
    if (visual && !visual->contains(key)) {
      throw FormatError("proxy key " + to_string(key) + " is not in the visual index", line_no);
    }
    records.push_back(ProxyRecord{key, j["description"].get<std::string>(), EmbeddingVector(std::move(v))});
  }
  if (records.size() != count) {
    throw FormatError("header declares " + std::to_string(count) + " records but file has " +
                          std::to_string(records.size()),
                      line_no);
  }
  auto corpus = make_proxy_corpus(std::move(records), header["provider"].get<std::string>(), visual);
  corpus.dim = dim;
  return corpus;
}

// ---- key lists -------------------------------------------------------------

std::vector<TileKey> read_keys(const std::filesystem::path& path) {
  const auto doc = detail::parse_json_file(path);
  if (!doc.is_object() || !doc.contains("keys") || !doc["keys"].is_array()) {
    throw FormatError(path.string() + ": expected {\"keys\": [...]}");
  }
  std::vector<TileKey> keys;
  std::size_t ordinal = 0;
  for (const auto& item : doc["keys"]) keys.push_back(detail::key_from_json(item, record_at(++ordinal)));
  return keys;
}

void write_keys(const std::filesystem::path& path, const std::vector<TileKey>& keys) {
  std::string out = "{\"keys\": [\n";
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out += "  " + detail::key_to_json(keys[i]).dump() + (i + 1 < keys.size() ? ",\n" : "\n");
  }
  out += "]}\n";
  detail::write_file(path, out);
}

}  // namespace geoquery
