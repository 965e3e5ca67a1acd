// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "geoquery/error.hpp"
#include "geoquery/random.hpp"
#include "json_util.hpp"

namespace geoquery {

namespace {

std::uint64_t pair_code(std::uint32_t i, std::uint32_t j) {
  return (std::uint64_t{std::min(i, j)} << 32) | std::max(i, j);
}

}  // namespace

void PairSample::validate(std::size_t n) const {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    if (i == j) throw InputError("pair sample contains a self-pair");
    if (i >= n || j >= n) {
      throw InputError("pair ordinal out of range (" + std::to_string(std::max(i, j)) + " >= " +
                       std::to_string(n) + ")");
    }
    if (!seen.insert(pair_code(i, j)).second) throw InputError("pair sample contains a duplicate pair");
  }
}

PairSample sample_pairs(std::size_t n, std::uint64_t seed, std::optional<std::size_t> n_pairs) {
  if (n < 2) throw InputError("need at least two vectors to form pairs");
  if (n > std::numeric_limits<std::uint32_t>::max()) throw InputError("too many vectors");
  const std::uint64_t total = std::uint64_t{n} * (n - 1) / 2;
  const std::uint64_t want = std::min<std::uint64_t>(n_pairs.value_or(50 * n), total);
  if (want == 0) throw InputError("pair count must be positive");

  PairSample sample;
  sample.seed = seed;
  sample.pairs.reserve(want);
  auto rng = rnd::make_engine(seed);
  const auto n32 = static_cast<std::uint32_t>(n);

  if (want * 2 >= total) {
    std::vector<kernels::OrdinalPair> all;
    all.reserve(total);
    for (std::uint32_t i = 0; i < n32; ++i) {
      for (std::uint32_t j = i + 1; j < n32; ++j) all.emplace_back(i, j);
    }
    for (std::uint64_t i = 0; i < want; ++i) std::swap(all[i], all[i + rnd::below(rng, total - i)]);
    all.resize(want);
    sample.pairs = std::move(all);
    return sample;
  }

  std::unordered_set<std::uint64_t> seen;
  seen.reserve(want * 2);
  while (sample.pairs.size() < want) {
    auto i = static_cast<std::uint32_t>(rnd::below(rng, n));
    auto j = static_cast<std::uint32_t>(rnd::below(rng, n));
    if (i == j || !seen.insert(pair_code(i, j)).second) continue;
    sample.pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  return sample;
}

std::vector<double> pairwise_distances(const std::vector<EmbeddingVector>& vectors,
                                       const PairSample& sample) {
  sample.validate(vectors.size());
  if (vectors.empty()) return {};
  const auto dim = vectors.front().dim();
  std::vector<const float*> rows;
  rows.reserve(vectors.size());
  for (const auto& v : vectors) {
    if (v.dim() != dim) {
      throw DimensionError("vector list mixes dims " + std::to_string(dim) + " and " + std::to_string(v.dim()));
    }
    rows.push_back(v.data());
  }
  // zero vectors have no cosine; reject before entering the parallel kernel
  for (const auto& [i, j] : sample.pairs) {
    for (auto o : {i, j}) {
      if (kernels::dot(rows[o], rows[o], dim) == 0.0) {
        throw DegenerateVectorError("vector " + std::to_string(o) + " is all-zero");
      }
    }
  }
  std::vector<double> out(sample.pairs.size());
  kernels::parallel::pair_cosine_distances(rows, dim, sample.pairs, out.data());
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&values](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) share rank mean((i+1)..j)
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw InputError("spearman inputs differ in length (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  }
  if (x.size() < 3) throw InputError("spearman needs at least 3 observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError("spearman input is not finite");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = 0.5 * (n + 1.0);  // mean of average ranks is always (n+1)/2
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("spearman is undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

AlignmentScore alignment_score(const std::vector<EmbeddingVector>& text_vecs,
                               const std::vector<EmbeddingVector>& visual_vecs,
                               const PairSample& sample) {
  if (text_vecs.size() != visual_vecs.size()) {
    throw InputError("text and visual vector lists differ in length");
  }
  const auto text_d = pairwise_distances(text_vecs, sample);
  const auto visual_d = pairwise_distances(visual_vecs, sample);
  return AlignmentScore{spearman(text_d, visual_d), sample.pairs.size()};
}

PromptRanking rank_prompts(const std::vector<PromptCandidate>& candidates,
                           const std::vector<TileKey>& keys, const DescribeOracle& describe,
                           const ProviderConfig& embed,
                           const std::vector<EmbeddingVector>& visual_vecs,
                           const PairSample& sample) {
  if (candidates.empty()) throw InputError("no prompt candidates");
  if (keys.size() != visual_vecs.size()) throw InputError("keys and visual vectors differ in length");
  sample.validate(keys.size());

  PromptRanking ranking;
  for (const auto& candidate : candidates) {
    CandidateOutcome outcome{candidate.id, std::nullopt, {}, {}};
    try {
      if (candidate.id.empty() || candidate.prompt_text.empty()) {
        throw InputError("prompt candidate needs an id and prompt text");
      }
      const Describer describer(describe, &candidate);
      std::vector<std::string> texts;
      texts.reserve(keys.size());
      for (const auto& key : keys) texts.push_back(describer.describe(key));
      const auto text_vecs = embed_texts(embed, texts);
      outcome.score = alignment_score(text_vecs, visual_vecs, sample);
      ranking.ranked.push_back(std::move(outcome));
    } catch (const Error& e) {
      outcome.error_code = e.code();
      outcome.message = e.what();
      ranking.failed.push_back(std::move(outcome));
    }
  }
  if (ranking.ranked.empty()) {
    throw AllCandidatesFailed("all " + std::to_string(candidates.size()) + " prompt candidates failed; first: " +
                              ranking.failed.front().message);
  }
  std::sort(ranking.ranked.begin(), ranking.ranked.end(), [](const auto& a, const auto& b) {
    if (a.score->rho != b.score->rho) return a.score->rho > b.score->rho;
    return a.candidate_id < b.candidate_id;
  });
  return ranking;
}

std::vector<PromptCandidate> read_prompt_candidates(const std::filesystem::path& path) {
  const auto doc = detail::parse_json_file(path);
  const auto& list = doc.is_object() && doc.contains("candidates") ? doc["candidates"] : doc;
  if (!list.is_array()) throw FormatError(path.string() + ": expected a candidate array");
  std::vector<PromptCandidate> out;
  for (const auto& c : list) {
    if (!c.is_object() || !c.contains("id") || !c["id"].is_string()) {
      throw FormatError(path.string() + ": candidate without a string id");
    }
    const char* field = c.contains("prompt_text") ? "prompt_text" : "prompt";
    if (!c.contains(field) || !c[field].is_string()) {
      throw FormatError(path.string() + ": candidate '" + c["id"].get<std::string>() + "' has no prompt");
    }
    out.push_back({c["id"].get<std::string>(), c[field].get<std::string>()});
  }
  return out;
}

}  // namespace geoquery
