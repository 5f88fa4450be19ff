#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "caudit/types.hpp"

namespace caudit::stats {

// ---------------------------------------------------------------------------
// Special functions. Exposed because the binomial-interval and exact-test
// implementations are part of the audited surface, not an internal detail.
// ---------------------------------------------------------------------------

double normal_cdf(double z);
double normal_sf(double z);      // upper tail, accurate for large z
double normal_quantile(double p);  // inverse CDF

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double betainc(double a, double b, double x);
// Quantile of Beta(a, b): smallest x with I_x(a,b) >= p.
double beta_ppf(double p, double a, double b);

// Upper-tail probability of a chi-square variate with 1 degree of freedom.
double chi2_sf1(double x);

double log_choose(std::int64_t n, std::int64_t k);

// ---------------------------------------------------------------------------
// Result carriers
// ---------------------------------------------------------------------------

enum class IntervalMethod { wilson, clopper_pearson };

struct RateEstimate {
  std::int64_t successes = 0;
  std::int64_t trials = 0;
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  IntervalMethod method = IntervalMethod::wilson;
  double level = 0.95;
};

enum class TestMethod { two_prop_z, chi_square, fisher_exact, permutation };

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::two_prop_z;
  std::optional<std::int64_t> n_resamples;
  bool degenerate = false;  // zero margin / pooled rate in {0,1}
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

RateEstimate wilson_interval(std::int64_t k, std::int64_t n, double level = 0.95);
RateEstimate clopper_pearson(std::int64_t k, std::int64_t n, double level = 0.95);

TestResult two_prop_z(std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2);

// Pearson chi-square without continuity correction when all expected cells
// are >= 5, two-sided Fisher exact otherwise. Rows are {a, b} and {c, d}.
TestResult chi_or_fisher(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);

// Always the exact two-sided test (the vulnerability tables pin Fisher).
TestResult fisher_exact(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);

double cohen_h(double p1, double p2);

// Two-tailed difference-in-means permutation test with the add-one estimator,
// so p is never exactly 0. Deterministic given the seed.
TestResult permutation_test(const std::vector<double>& group_a,
                            const std::vector<double>& group_b,
                            std::int64_t n_perm, std::uint64_t seed);

// Percentile bootstrap over a statistic of the resampled values. Quantiles
// use the nearest-rank definition.
std::pair<double, double> bootstrap_ci(
    const std::vector<double>& values,
    const std::function<double(const std::vector<double>&)>& statistic,
    std::int64_t n_boot = 1000, double level = 0.95, std::uint64_t seed = 0);

std::pair<double, double> bootstrap_ci_mean(const std::vector<double>& values,
                                            std::int64_t n_boot = 1000,
                                            double level = 0.95,
                                            std::uint64_t seed = 0);

struct SpearmanResult {
  std::optional<double> rho;  // null when either ranking has zero variance
  bool zero_variance = false;
};

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& v);

// Shannon entropy of label counts normalized by ln 6.
double normalized_entropy(const std::array<std::int64_t, 6>& counts);

// Nearest-rank empirical quantile of a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double q);

}  // namespace caudit::stats
