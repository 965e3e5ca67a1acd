// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geoquery {

/// Fixed-dimension float32 vector; all values finite, dim > 0.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<float> values);
  EmbeddingVector(std::initializer_list<float> values)
      : EmbeddingVector(std::vector<float>(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const noexcept { return values_[i]; }
  const float* data() const noexcept { return values_.data(); }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

/// Dot product with 64-bit accumulation.
double dot(std::span<const float> a, std::span<const float> b);

/// Cosine similarity clamped to [-1, 1]. Throws DimensionError on a dim
/// mismatch and DegenerateVectorError if either vector is all-zero.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

EmbeddingVector l2_normalize(const EmbeddingVector& v);

/// In-place variant over raw storage; throws DegenerateVectorError on zero.
void l2_normalize_inplace(std::span<float> v);

struct ProviderConfig {
  enum class Kind { Synthetic, Remote };

  Kind kind = Kind::Synthetic;
  std::size_t dim = 256;
  std::optional<std::string> endpoint_url;
  int timeout_ms = 10000;
  std::uint64_t seed = 0;

  /// Throws InputError if the configuration is unusable.
  void validate() const;
  /// Stable identity string recorded in persisted artifacts,
  /// e.g. "synthetic:seed=7:dim=256".
  std::string identity() const;
};

/// Embeds one text. Synthetic: signed character-3-gram hashing into `dim`
/// buckets, then L2 normalisation. Remote: POST {"texts":[...]} expecting
/// {"embeddings":[[...]]}, one retry on transport failure.
EmbeddingVector embed_text(const ProviderConfig& cfg, std::string_view text);

/// Batched form; Remote sends the batch in a single request.
std::vector<EmbeddingVector> embed_texts(const ProviderConfig& cfg,
                                         const std::vector<std::string>& texts);

}  // namespace geoquery
