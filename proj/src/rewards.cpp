#include "cgrpo/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace cgrpo {

void RewardWeights::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("reward weights must lie in [0, 1]");
  }
  if (std::abs(alpha + beta - 1.0) > 1e-9) {
    throw std::invalid_argument("reward weights must satisfy alpha + beta = 1");
  }
}

std::string to_string(NormalizationScope s) {
  return s == NormalizationScope::group ? "group" : "batch";
}

NormalizationScope normalization_scope_from_string(const std::string& s) {
  if (s == "group") return NormalizationScope::group;
  if (s == "batch") return NormalizationScope::batch;
  throw std::invalid_argument("unknown normalization scope '" + s + "'");
}

std::vector<double> completion_entropies(std::span<const TokenSeq> completions) {
  std::vector<double> h;
  h.reserve(completions.size());
  for (const auto& c : completions) h.push_back(shannon_entropy(c));
  return h;
}

std::vector<double> helpfulness_from_entropies(std::span<const double> entropies) {
  return normalize_entropies(entropies);
}

std::vector<double> helpfulness_reward(std::span<const TokenSeq> completions) {
  if (completions.empty()) {
    throw std::invalid_argument("helpfulness_reward of an empty list");
  }
  const auto h = completion_entropies(completions);
  return helpfulness_from_entropies(h);
}

std::vector<std::vector<double>> helpfulness_batch(
    std::span<const std::vector<double>> group_entropies) {
  std::vector<double> flat;
  for (const auto& g : group_entropies) flat.insert(flat.end(), g.begin(), g.end());
  const auto norm = normalize_entropies(flat);
  std::vector<std::vector<double>> out;
  std::size_t pos = 0;
  for (const auto& g : group_entropies) {
    out.emplace_back(norm.begin() + static_cast<std::ptrdiff_t>(pos),
                     norm.begin() + static_cast<std::ptrdiff_t>(pos + g.size()));
    pos += g.size();
  }
  return out;
}

std::vector<double> consistency_from_entropies(std::span<const double> entropies,
                                               std::span<const IndexPair> pairing,
                                               std::size_t group_size,
                                               GapDivisor divisor) {
  const double f = stability_score(entropies, pairing, group_size, divisor);
  return std::vector<double>(entropies.size(), f);
}

std::vector<double> consistency_reward(std::span<const TokenSeq> completions,
                                       std::span<const IndexPair> pairing,
                                       std::size_t group_size, GapDivisor divisor) {
  const auto h = completion_entropies(completions);
  return consistency_from_entropies(h, pairing, group_size, divisor);
}

std::vector<double> combine(std::span<const double> helpfulness,
                            std::span<const double> consistency,
                            const RewardWeights& weights) {
  weights.validate();
  if (helpfulness.size() != consistency.size()) {
    throw std::invalid_argument("helpfulness and consistency lengths differ");
  }
  std::vector<double> out(helpfulness.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = weights.alpha * helpfulness[i] + weights.beta * consistency[i];
  }
  return out;
}

std::vector<double> combined_reward(std::span<const TokenSeq> completions,
                                    std::span<const IndexPair> pairing,
                                    std::size_t group_size,
                                    const RewardWeights& weights,
                                    GapDivisor divisor) {
  weights.validate();
  const auto h = completion_entropies(completions);
  const auto help = helpfulness_from_entropies(h);
  const auto cons = consistency_from_entropies(h, pairing, group_size, divisor);
  return combine(help, cons, weights);
}

std::vector<RewardBreakdown> reward_breakdown(std::span<const double> entropies,
                                              std::span<const IndexPair> pairing,
                                              std::size_t group_size,
                                              const RewardOptions& options) {
  const auto help = helpfulness_from_entropies(entropies);
  const auto cons =
      consistency_from_entropies(entropies, pairing, group_size, options.divisor);
  const auto comb = combine(help, cons, options.weights);
  std::vector<RewardBreakdown> out(entropies.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {help[i], cons[i], comb[i]};
  }
  return out;
}

} // namespace cgrpo
