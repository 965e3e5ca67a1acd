// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Indirect text/visual alignment: how well do pairwise distances in the
// text-embedding space rank-correlate with those in the visual space?

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoquery/corpus.hpp"
#include "geoquery/embedding.hpp"
#include "geoquery/kernels.hpp"

namespace geoquery {

/// Unordered pairs (i < j) of ordinals into a shared key list.
struct PairSample {
  std::vector<kernels::OrdinalPair> pairs;
  std::uint64_t seed = 0;

  /// Throws InputError if any pair is degenerate, duplicated or >= n.
  void validate(std::size_t n) const;
};

/// Uniform unordered pairs without replacement. `n_pairs` defaults to 50*n,
/// and is capped at n*(n-1)/2.
PairSample sample_pairs(std::size_t n, std::uint64_t seed,
                        std::optional<std::size_t> n_pairs = std::nullopt);

struct AlignmentScore {
  double rho;
  std::size_t n_pairs;
};

/// Cosine distance 1 - cos(v_i, v_j) for each sampled pair, in sample order.
std::vector<double> pairwise_distances(const std::vector<EmbeddingVector>& vectors,
                                       const PairSample& sample);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Spearman's rho with average-rank ties. Throws InputError on length
/// mismatch, fewer than 3 values or non-finite input, DegenerateInputError
/// when either input is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

AlignmentScore alignment_score(const std::vector<EmbeddingVector>& text_vecs,
                               const std::vector<EmbeddingVector>& visual_vecs,
                               const PairSample& sample);

struct CandidateOutcome {
  std::string candidate_id;
  std::optional<AlignmentScore> score;
  std::string error_code;  // set when score is empty
  std::string message;
};

struct PromptRanking {
  std::vector<CandidateOutcome> ranked;  // successes, rho descending, ties by id
  std::vector<CandidateOutcome> failed;
};

/// Describes every key under each candidate prompt, embeds the
/// descriptions and scores alignment against `visual_vecs`. Throws
/// AllCandidatesFailed if no candidate produced a score.
PromptRanking rank_prompts(const std::vector<PromptCandidate>& candidates,
                           const std::vector<TileKey>& keys, const DescribeOracle& describe,
                           const ProviderConfig& embed,
                           const std::vector<EmbeddingVector>& visual_vecs,
                           const PairSample& sample);

std::vector<PromptCandidate> read_prompt_candidates(const std::filesystem::path& path);

}  // namespace geoquery
