#include <doctest.h>

#include "cgrpo/rewards.hpp"
#include "cgrpo/rng.hpp"
#include "fixtures.hpp"

using namespace cgrpo;

namespace {

// Completion with the given counts of distinct symbols, e.g. {2,1,1}.
TokenSeq with_counts(std::initializer_list<int> counts) {
  TokenSeq t;
  int sym = 0;
  for (int c : counts) {
    for (int i = 0; i < c; ++i) t.push_back("s" + std::to_string(sym));
    ++sym;
  }
  return t;
}

std::vector<TokenSeq> random_completions(Rng& rng, std::size_t n) {
  std::vector<TokenSeq> out(n);
  for (auto& c : out) {
    const auto len = 1 + rng.below(12);
    for (std::size_t i = 0; i < len; ++i) c.push_back("t" + std::to_string(rng.below(5)));
  }
  return out;
}

} // namespace

TEST_SUITE("rewards") {

TEST_CASE("helpfulness oracles") {
  CHECK(helpfulness_reward(std::vector<TokenSeq>{{"a", "a"}, {"a", "b"}}) ==
        std::vector{0.0, 1.0});
  CHECK(helpfulness_reward(std::vector<TokenSeq>{{"a", "b"}, {"b", "a"}}) ==
        std::vector{0.5, 0.5});
  auto h = helpfulness_reward(
      std::vector<TokenSeq>{with_counts({4}), with_counts({1, 1}), with_counts({2, 1, 1})});
  CHECK(h[0] == 0.0);
  CHECK(std::abs(h[1] - 0.6666666666666667) < 1e-9);
  CHECK(h[2] == 1.0);
  CHECK_THROWS_AS(helpfulness_reward(std::vector<TokenSeq>{{"a"}, {}}), EmptyCompletionError);
}

TEST_CASE("consistency oracles") {
  const std::vector<IndexPair> one{{0, 1}};
  CHECK(consistency_reward(std::vector<TokenSeq>{{"a", "b"}, {"a", "b"}}, one, 1) ==
        std::vector{1.0, 1.0});
  CHECK(consistency_from_entropies(std::vector{1.0, 2.0}, one, 1) == std::vector{0.0, 0.0});
  auto f = consistency_from_entropies(std::vector{1.0, 2.0, 3.0, 3.0},
                                      std::vector<IndexPair>{{0, 2}, {1, 3}}, 2);
  for (double x : f) CHECK(std::abs(x - 0.25) < 1e-12);
}

TEST_CASE("combine oracles") {
  const RewardWeights w;
  CHECK(combine(std::vector{1.0}, std::vector{1.0}, w)[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(combine(std::vector{0.5}, std::vector{1.0}, w)[0] - 0.8) < 1e-12);
  auto c = combine(std::vector{0.0, 1.0}, std::vector{0.25, 0.25}, w);
  CHECK(std::abs(c[0] - 0.15) < 1e-12);
  CHECK(std::abs(c[1] - 0.55) < 1e-12);
}

TEST_CASE("weights are validated") {
  CHECK_THROWS((RewardWeights{0.5, 0.6}.validate()));
  CHECK_THROWS((RewardWeights{-0.1, 1.1}.validate()));
  CHECK_NOTHROW((RewardWeights{1.0, 0.0}.validate()));
  CHECK_THROWS(combine(std::vector{0.5}, std::vector{0.5}, RewardWeights{0.7, 0.7}));
  CHECK_THROWS(combine(std::vector{0.5, 0.1}, std::vector{0.5}, RewardWeights{}));
}

TEST_CASE("rewards stay in [0,1] and weight endpoints reproduce the components") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    auto comps = random_completions(rng, 2 * n);
    const auto pairing = split_half_pairing(n);
    const auto h = helpfulness_reward(comps);
    const auto f = consistency_reward(comps, pairing, n);
    const auto r = combined_reward(comps, pairing, n);
    for (std::size_t k = 0; k < comps.size(); ++k) {
      CHECK(h[k] >= 0.0);
      CHECK(h[k] <= 1.0);
      CHECK(f[k] >= 0.0);
      CHECK(f[k] <= 1.0);
      CHECK(r[k] >= 0.0);
      CHECK(r[k] <= 1.0 + 1e-15);
      CHECK(f[k] == f[0]);
    }
    CHECK(combined_reward(comps, pairing, n, {1.0, 0.0}) == h);
    CHECK(combined_reward(comps, pairing, n, {0.0, 1.0}) == f);
  }
}

TEST_CASE("combined reward is monotone in normalized entropy") {
  Rng rng(29);
  const RewardWeights w;
  for (int trial = 0; trial < 500; ++trial) {
    const double f = rng.uniform();
    const double h1 = rng.uniform(), h2 = rng.uniform();
    const auto r = combine(std::vector{h1, h2}, std::vector{f, f}, w);
    if (h1 <= h2) CHECK(r[0] <= r[1]);
    else CHECK(r[0] >= r[1]);
  }
}

TEST_CASE("breakdown agrees with the separate reward functions") {
  Rng rng(31);
  auto comps = random_completions(rng, 8);
  const auto pairing = split_half_pairing(4);
  const auto e = completion_entropies(comps);
  const auto b = reward_breakdown(e, pairing, 4, {});
  const auto r = combined_reward(comps, pairing, 4);
  for (std::size_t k = 0; k < comps.size(); ++k) CHECK(b[k].combined == r[k]);
}

TEST_CASE("batch scope shares one normalization range") {
  std::vector<std::vector<double>> groups{{1.0, 2.0}, {3.0, 5.0}};
  auto h = helpfulness_batch(groups);
  CHECK(h[0] == std::vector{0.0, 0.25});
  CHECK(h[1] == std::vector{0.5, 1.0});
}

}
