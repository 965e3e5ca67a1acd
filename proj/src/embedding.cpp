// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "geoquery/error.hpp"
#include "http_client.hpp"
#include "geoquery/kernels.hpp"

namespace geoquery {

EmbeddingVector::EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw InputError("embedding dimension must be positive");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw InputError("embedding component " + std::to_string(i) + " is not finite");
    }
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  return kernels::dot(a.data(), b.data(), a.size());
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
  const double na = kernels::dot(a.data(), a.data(), a.dim());
  const double nb = kernels::dot(b.data(), b.data(), b.dim());
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine similarity of a zero vector");
  const double c = kernels::dot(a.data(), b.data(), a.dim()) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

void l2_normalize_inplace(std::span<float> v) {
  const double sq = kernels::dot(v.data(), v.data(), v.size());
  if (sq == 0.0) throw DegenerateVectorError("cannot normalise a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& x : v) x = static_cast<float>(x * inv);
}

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
  std::vector<float> out(v.values().begin(), v.values().end());
  l2_normalize_inplace(out);
  return EmbeddingVector(std::move(out));
}

void ProviderConfig::validate() const {
  if (dim == 0) throw InputError("provider dim must be positive");
  if (timeout_ms <= 0) throw InputError("provider timeout_ms must be positive");
  if (kind == Kind::Remote && (!endpoint_url || endpoint_url->empty())) {
    throw InputError("remote provider requires endpoint_url");
  }
}

std::string ProviderConfig::identity() const {
  if (kind == Kind::Synthetic) {
    return "synthetic:seed=" + std::to_string(seed) + ":dim=" + std::to_string(dim);
  }
  return "remote:" + endpoint_url.value_or("") + ":dim=" + std::to_string(dim);
}

namespace {

std::uint64_t fnv1a(std::uint64_t seed, std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // final avalanche so that the top bit (the sign) is well mixed
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

EmbeddingVector embed_synthetic(const ProviderConfig& cfg, std::string_view text) {
  // lower-case, collapse whitespace runs, pad so short words still yield grams
  std::string norm = " ";
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (norm.back() != ' ') norm.push_back(' ');
    } else {
      norm.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (norm.back() != ' ') norm.push_back(' ');
  if (norm.size() < 3) throw InputError("text is blank");

  std::vector<float> buckets(cfg.dim, 0.0f);
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
    const auto h = fnv1a(cfg.seed, std::string_view(norm).substr(i, 3));
    buckets[h % cfg.dim] += (h >> 63) ? -1.0f : 1.0f;
  }
  l2_normalize_inplace(buckets);
  return EmbeddingVector(std::move(buckets));
}

std::vector<EmbeddingVector> embed_remote(const ProviderConfig& cfg,
                                          const std::vector<std::string>& texts) {
  const auto response =
      detail::post_json(*cfg.endpoint_url, nlohmann::json{{"texts", texts}}, cfg.timeout_ms);
  if (!response.is_object() || !response.contains("embeddings") ||
      !response["embeddings"].is_array()) {
    throw FormatError("embedding response lacks an 'embeddings' array");
  }
  const auto& rows = response["embeddings"];
  if (rows.size() != texts.size()) {
    throw FormatError("embedding response has " + std::to_string(rows.size()) +
                      " vectors for " + std::to_string(texts.size()) + " texts");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (!row.is_array()) throw FormatError("embedding row is not an array");
    if (row.size() != cfg.dim) {
      throw DimensionError("provider returned dim " + std::to_string(row.size()) +
                           ", expected " + std::to_string(cfg.dim));
    }
    std::vector<float> v;
    v.reserve(row.size());
    for (const auto& x : row) {
      if (!x.is_number()) throw FormatError("embedding component is not a number");
      v.push_back(x.get<float>());
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

}  // namespace

EmbeddingVector embed_text(const ProviderConfig& cfg, std::string_view text) {
  return embed_texts(cfg, {std::string(text)}).front();
}

std::vector<EmbeddingVector> embed_texts(const ProviderConfig& cfg,
                                         const std::vector<std::string>& texts) {
  cfg.validate();
  for (const auto& t : texts) {
    if (t.empty()) throw InputError("cannot embed empty text");
  }
  if (cfg.kind == ProviderConfig::Kind::Remote) return embed_remote(cfg, texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_synthetic(cfg, t));
  return out;
}

}  // namespace geoquery
