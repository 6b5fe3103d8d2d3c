#pragma once

#include <span>

namespace cgrpo {

// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
double incomplete_beta(double a, double b, double x);

// CDF of Student's t distribution with df > 0 degrees of freedom.
double t_cdf(double x, double df);

enum class TestKind { welch, student };

struct TTestResult {
  double t_stat = 0.0;
  double p_value = 1.0; // two-tailed
  double df = 0.0;
  // Both samples have zero variance: t is NaN and p is 1.
  bool degenerate = false;
};

// Two-sample, two-tailed t-test. Welch uses the Welch-Satterthwaite degrees
// of freedom; Student pools the variances. Each sample needs >= 2 values.
TTestResult t_test(std::span<const double> a, std::span<const double> b,
                   TestKind kind = TestKind::welch);

inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  return t_test(a, b, TestKind::welch);
}

double mean(std::span<const double> xs);
// Unbiased (n - 1) sample variance.
double sample_variance(std::span<const double> xs);

} // namespace cgrpo
