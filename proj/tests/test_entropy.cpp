#include <doctest.h>

#include "cgrpo/entropy.hpp"
#include "cgrpo/rng.hpp"
#include "fixtures.hpp"

#include <algorithm>
#include <set>

using namespace cgrpo;
using Tokens = std::vector<std::string>;

TEST_SUITE("entropy") {

TEST_CASE("shannon entropy oracles") {
  CHECK(shannon_entropy(Tokens{"a", "a", "a", "a"}) == 0.0);
  CHECK(shannon_entropy(Tokens{"a", "b"}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  // -(0.5 ln 0.5 + 2 * 0.25 ln 0.25)
  CHECK(std::abs(shannon_entropy(Tokens{"a", "a", "b", "c"}) - 1.0397207708399179) < 1e-12);
  CHECK_THROWS_AS(shannon_entropy(Tokens{}), EmptyCompletionError);
}

TEST_CASE("entropy is permutation invariant and bounded by ln(distinct)") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens t;
    const auto n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) t.push_back(std::string(1, char('a' + rng.below(6))));
    const double h = shannon_entropy(t);
    Tokens shuffled = t;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    CHECK(std::abs(shannon_entropy(shuffled) - h) < 1e-12);
    const auto distinct = std::set<std::string>(t.begin(), t.end()).size();
    CHECK(h >= 0.0);
    CHECK(h <= std::log(double(distinct)) + 1e-12);
    CHECK((h == 0.0) == (distinct == 1));
  }
}

TEST_CASE("entropy reaches ln m exactly for equal counts") {
  for (int m = 1; m <= 8; ++m) {
    Tokens t;
    for (int rep = 0; rep < 3; ++rep)
      for (int k = 0; k < m; ++k) t.push_back("x" + std::to_string(k));
    CHECK(std::abs(shannon_entropy(t) - std::log(double(m))) < 1e-12);
  }
  // Unequal counts stay strictly below.
  CHECK(shannon_entropy(Tokens{"a", "a", "b"}) < std::log(2.0) - 1e-3);
}

TEST_CASE("token distribution counts") {
  auto d = token_distribution(Tokens{"a", "a", "b", "c"});
  CHECK(d.total == 4);
  CHECK(d.probability("a") == 0.5);
  CHECK(d.probability("c") == 0.25);
  CHECK(d.probability("z") == 0.0);
}

TEST_CASE("tokenizer normalizes case and unicode form") {
  CHECK(tokenize("Hello  WORLD\thello", Tokenization::whitespace) ==
        Tokens{"hello", "world", "hello"});
  // Precomposed and combining forms of é are one token after NFC.
  const std::string precomposed = "caf\xC3\xA9";
  const std::string combining = "cafe\xCC\x81";
  CHECK(tokenize(precomposed + " " + combining, Tokenization::whitespace) ==
        Tokens{precomposed, precomposed});
  // No-break space separates words too.
  CHECK(tokenize("a\xC2\xA0" "b", Tokenization::whitespace) == Tokens{"a", "b"});
  CHECK(tokenize("ab a", Tokenization::character) == Tokens{"a", "b", "a"});
  CHECK(text_entropy("x x y z", Tokenization::whitespace) ==
        doctest::Approx(1.0397207708399179).epsilon(1e-12));
  CHECK_THROWS_AS(text_entropy("   ", Tokenization::whitespace), EmptyCompletionError);
}

TEST_CASE("normalize_entropies oracles") {
  CHECK(normalize_entropies(std::vector{1.0, 2.0, 3.0}) == std::vector{0.0, 0.5, 1.0});
  CHECK(normalize_entropies(std::vector{2.0, 2.0}) == std::vector{0.5, 0.5});
  auto n = normalize_entropies(std::vector{0.0, std::log(2.0), 1.0397207708399179});
  CHECK(n[0] == 0.0);
  CHECK(std::abs(n[1] - 0.6666666666666667) < 1e-9);
  CHECK(n[2] == 1.0);
  CHECK_THROWS(normalize_entropies(std::vector<double>{}));
}

TEST_CASE("normalize_entropies is order preserving and idempotent") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(2 + rng.below(10));
    for (double& x : xs) x = 3.0 * rng.uniform();
    auto n = normalize_entropies(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(n[i] >= 0.0);
      CHECK(n[i] <= 1.0);
      for (std::size_t j = 0; j < xs.size(); ++j)
        if (xs[i] < xs[j]) CHECK(n[i] <= n[j]);
    }
    CHECK(*std::min_element(n.begin(), n.end()) == 0.0);
    CHECK(*std::max_element(n.begin(), n.end()) == 1.0);
    auto twice = normalize_entropies(n);
    for (std::size_t i = 0; i < n.size(); ++i) CHECK(std::abs(twice[i] - n[i]) < 1e-15);
  }
}

TEST_CASE("entropy gap oracles and symmetry") {
  CHECK(entropy_gap(1.5, 1.5) == 0.0);
  CHECK(entropy_gap(0.0, 0.7) == 0.7);
  CHECK(entropy_gap(0.7, 0.0) == 0.7);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double a = testing::normal(rng, 10), b = testing::normal(rng, 10);
    CHECK(entropy_gap(a, b) == entropy_gap(b, a));
    CHECK(entropy_gap(a, b) >= 0.0);
  }
}

TEST_CASE("stability score oracles") {
  const std::vector<IndexPair> one{{0, 1}};
  CHECK(stability_score(std::vector{1.0, 1.0}, one, 1) == 1.0);
  CHECK(stability_score(std::vector{1.0, 2.0}, one, 1) == 0.0);
  const std::vector<IndexPair> two{{0, 2}, {1, 3}};
  CHECK(std::abs(stability_score(std::vector{1.0, 2.0, 3.0, 3.0}, two, 2) - 0.25) < 1e-12);
  CHECK(max_gap(std::vector{1.0, 2.0, 3.0, 3.0}, two) == 2.0);
  CHECK(split_half_pairing(3) == std::vector<IndexPair>{{0, 3}, {1, 4}, {2, 5}});
  CHECK_THROWS(stability_score(std::vector{1.0, 2.0}, std::vector<IndexPair>{}, 1));
  CHECK_THROWS(stability_score(std::vector{1.0, 2.0}, one, 0));
}

TEST_CASE("stability score divisor choice") {
  const std::vector<IndexPair> two{{0, 2}, {1, 3}};
  const std::vector e{1.0, 2.0, 3.0, 3.0};
  // 1 - (1/4) * 1.5, and with the pair count as divisor 1 - (1/2) * 1.5
  CHECK(std::abs(stability_score(e, two, 4) - 0.625) < 1e-12);
  CHECK(std::abs(stability_score(e, two, 4, GapDivisor::pair_count) - 0.25) < 1e-12);
  // A small K can push the raw value negative; it is clamped.
  CHECK(stability_score(e, two, 1) == 0.0);
}

TEST_CASE("stability score is scale invariant and bounded") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> e(2 * n);
    for (double& x : e) x = 2.0 * rng.uniform();
    const auto pairing = split_half_pairing(n);
    const double f = stability_score(e, pairing, n);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    const double c = 0.1 + 5.0 * rng.uniform();
    auto scaled = e;
    for (double& x : scaled) x *= c;
    CHECK(std::abs(stability_score(scaled, pairing, n) - f) < 1e-12);
  }
}

TEST_CASE("stability score falls as one gap widens") {
  std::vector e{1.0, 1.2, 1.0, 1.5};
  const std::vector<IndexPair> two{{0, 2}, {1, 3}};
  double prev = stability_score(e, two, 2);
  for (double g = 0.0; g < 0.3; g += 0.05) {
    e[2] = 1.0 + g;
    const double f = stability_score(e, two, 2);
    CHECK(f <= prev + 1e-12);
    prev = f;
  }
}

}
