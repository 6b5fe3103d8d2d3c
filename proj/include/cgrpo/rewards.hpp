#pragma once

#include "cgrpo/entropy.hpp"

#include <span>
#include <string>
#include <vector>

namespace cgrpo {

using TokenSeq = std::vector<std::string>;

struct RewardWeights {
  double alpha = 0.4; // helpfulness
  double beta = 0.6;  // consistency

  // Throws std::invalid_argument unless both lie in [0,1] and sum to 1.
  void validate() const;
};

struct RewardBreakdown {
  double helpfulness = 0.0;
  double consistency = 0.0;
  double combined = 0.0;
};

enum class NormalizationScope { group, batch };

std::string to_string(NormalizationScope s);
NormalizationScope normalization_scope_from_string(const std::string& s);

struct RewardOptions {
  RewardWeights weights;
  NormalizationScope scope = NormalizationScope::group;
  GapDivisor divisor = GapDivisor::group_size;
};

std::vector<double> completion_entropies(std::span<const TokenSeq> completions);

// Helpfulness is the min-max normalized entropy of each completion.
std::vector<double> helpfulness_reward(std::span<const TokenSeq> completions);
std::vector<double> helpfulness_from_entropies(std::span<const double> entropies);

// Batch scope: one normalization range shared by several groups.
std::vector<std::vector<double>> helpfulness_batch(
    std::span<const std::vector<double>> group_entropies);

// Consistency is a group-level score: every completion receives the same F_norm.
std::vector<double> consistency_reward(std::span<const TokenSeq> completions,
                                       std::span<const IndexPair> pairing,
                                       std::size_t group_size,
                                       GapDivisor divisor = GapDivisor::group_size);
std::vector<double> consistency_from_entropies(std::span<const double> entropies,
                                               std::span<const IndexPair> pairing,
                                               std::size_t group_size,
                                               GapDivisor divisor = GapDivisor::group_size);

// Elementwise alpha * h + beta * f.
std::vector<double> combine(std::span<const double> helpfulness,
                            std::span<const double> consistency,
                            const RewardWeights& weights);

std::vector<double> combined_reward(std::span<const TokenSeq> completions,
                                    std::span<const IndexPair> pairing,
                                    std::size_t group_size,
                                    const RewardWeights& weights = {},
                                    GapDivisor divisor = GapDivisor::group_size);

// Full per-completion breakdown from precomputed entropies (group scope).
std::vector<RewardBreakdown> reward_breakdown(std::span<const double> entropies,
                                              std::span<const IndexPair> pairing,
                                              std::size_t group_size,
                                              const RewardOptions& options);

} // namespace cgrpo
