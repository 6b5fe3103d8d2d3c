#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <ranges>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cgrpo {

using IndexPair = std::pair<std::size_t, std::size_t>;

// Raised for an empty completion. An empty output has no empirical token
// distribution; scoring it as zero entropy would let the consistency term
// reward emitting nothing.
class EmptyCompletionError : public std::invalid_argument {
public:
  EmptyCompletionError() : std::invalid_argument("entropy of an empty token sequence") {}
};

enum class Tokenization { whitespace, character };

std::string to_string(Tokenization t);
Tokenization tokenization_from_string(const std::string& s);

// NFC-normalizes and lowercases UTF-8 text, then splits it on Unicode white
// space (whitespace) or into code points with white space dropped (character).
std::vector<std::string> tokenize(std::string_view text, Tokenization mode);

template <class Token>
struct TokenDistribution {
  std::map<Token, std::size_t> counts;
  std::size_t total = 0;

  double probability(const Token& t) const {
    auto it = counts.find(t);
    return it == counts.end() ? 0.0
                              : static_cast<double>(it->second) / static_cast<double>(total);
  }
};

template <std::ranges::input_range R>
auto token_distribution(const R& tokens) {
  using Token = std::ranges::range_value_t<R>;
  TokenDistribution<Token> d;
  for (const auto& t : tokens) {
    ++d.counts[t];
    ++d.total;
  }
  return d;
}

// Shannon entropy of the empirical token distribution, in nats.
template <std::ranges::input_range R>
double shannon_entropy(const R& tokens) {
  using Token = std::ranges::range_value_t<R>;
  std::unordered_map<Token, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& t : tokens) {
    ++counts[t];
    ++total;
  }
  if (total == 0) {
    throw EmptyCompletionError();
  }
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (const auto& [tok, c] : counts) {
    if (c == total) return 0.0;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double text_entropy(std::string_view text, Tokenization mode);

struct EntropyStats {
  double raw = 0.0;        // nats
  double normalized = 0.0; // within the batch it was computed in
  std::size_t n_tokens = 0;

  double bits() const { return raw / std::log(2.0); }
};

// Min-max maps a batch of entropies onto [0, 1]. A degenerate batch
// (max == min) maps every entry to 0.5.
std::vector<double> normalize_entropies(std::span<const double> raw);

inline double entropy_gap(double h_a, double h_b) { return std::abs(h_a - h_b); }

enum class GapDivisor { group_size, pair_count };

std::string to_string(GapDivisor d);
GapDivisor gap_divisor_from_string(const std::string& s);

// Pairs entry k with entry k + n for k < n: the layout where the first n
// entropies belong to one variant and the next n to the other.
std::vector<IndexPair> split_half_pairing(std::size_t n);

// Largest paired gap.
double max_gap(std::span<const double> entropies, std::span<const IndexPair> pairing);

// Aggregate stability: 1 - (1/K) * sum over pairs of gap / MAX_GAP, clamped
// to [0, 1], where K is `group_size` (or the pair count with
// GapDivisor::pair_count). Returns exactly 1 when every paired gap is zero.
double stability_score(std::span<const double> entropies,
                       std::span<const IndexPair> pairing, std::size_t group_size,
                       GapDivisor divisor = GapDivisor::group_size);

} // namespace cgrpo
