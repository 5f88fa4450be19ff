#include "caudit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caudit/rng.hpp"

namespace caudit::stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p outside (0,1)");
  // Acklam's rational approximation refined by one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

namespace {

double betacf(double a, double b, double x) {
  // Lentz's continued fraction for the incomplete beta.
  const int kMaxIter = 300;
  const double eps = 3e-16, fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double betainc(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  double front = std::exp(lbeta + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double beta_ppf(double p, double a, double b) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (betainc(a, b, mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double chi2_sf1(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

double log_choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

RateEstimate wilson_interval(std::int64_t k, std::int64_t n, double level) {
  if (n < 1) throw DataError("wilson_interval: n must be >= 1");
  if (k < 0 || k > n) throw DataError("wilson_interval: k outside [0, n]");
  double z = normal_quantile(0.5 + level / 2.0);
  double p = static_cast<double>(k) / static_cast<double>(n);
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half = (z / denom) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  RateEstimate r;
  r.successes = k;
  r.trials = n;
  r.rate = p;
  r.ci_low = std::max(0.0, center - half);
  r.ci_high = std::min(1.0, center + half);
  r.method = IntervalMethod::wilson;
  r.level = level;
  return r;
}

RateEstimate clopper_pearson(std::int64_t k, std::int64_t n, double level) {
  if (n < 1) throw DataError("clopper_pearson: n must be >= 1");
  if (k < 0 || k > n) throw DataError("clopper_pearson: k outside [0, n]");
  double alpha = 1.0 - level;
  RateEstimate r;
  r.successes = k;
  r.trials = n;
  r.rate = static_cast<double>(k) / static_cast<double>(n);
  r.ci_low = (k == 0) ? 0.0 : beta_ppf(alpha / 2.0, k, n - k + 1.0);
  r.ci_high = (k == n) ? 1.0 : beta_ppf(1.0 - alpha / 2.0, k + 1.0, n - k);
  r.method = IntervalMethod::clopper_pearson;
  r.level = level;
  return r;
}

TestResult two_prop_z(std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2) {
  if (n1 < 1 || n2 < 1) throw DataError("two_prop_z: zero trials");
  TestResult t;
  t.method = TestMethod::two_prop_z;
  double p1 = static_cast<double>(k1) / n1;
  double p2 = static_cast<double>(k2) / n2;
  double pool = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  if (pool <= 0.0 || pool >= 1.0) {
    t.statistic = 0.0;
    t.p_value = 1.0;
    t.degenerate = true;
    return t;
  }
  double se = std::sqrt(pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2));
  t.statistic = (p1 - p2) / se;
  t.p_value = std::min(1.0, 2.0 * normal_sf(std::fabs(t.statistic)));
  return t;
}

TestResult fisher_exact(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw DataError("fisher_exact: negative count");
  std::int64_t r1 = a + b, r2 = c + d, c1 = a + c, n = a + b + c + d;
  TestResult t;
  t.method = TestMethod::fisher_exact;
  if (n <= 0 || r1 == 0 || r2 == 0 || c1 == 0 || c1 == n) {
    t.p_value = 1.0;
    t.degenerate = true;
    return t;
  }
  auto logp = [&](std::int64_t k) {
    return log_choose(r1, k) + log_choose(r2, c1 - k) - log_choose(n, c1);
  };
  std::int64_t klo = std::max<std::int64_t>(0, c1 - r2);
  std::int64_t khi = std::min(r1, c1);
  double lobs = logp(a);
  double p = 0.0;
  for (std::int64_t k = klo; k <= khi; ++k) {
    double lp = logp(k);
    if (lp <= lobs + 1e-7) p += std::exp(lp);
  }
  t.statistic = std::exp(lobs);
  t.p_value = std::min(1.0, p);
  return t;
}

TestResult chi_or_fisher(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw DataError("chi_or_fisher: negative count");
  std::int64_t n = a + b + c + d;
  if (n <= 0) throw DataError("chi_or_fisher: empty table");
  double r1 = static_cast<double>(a + b), r2 = static_cast<double>(c + d);
  double c1 = static_cast<double>(a + c), c2 = static_cast<double>(b + d);
  TestResult t;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) {
    t.method = TestMethod::chi_square;
    t.p_value = 1.0;
    t.degenerate = true;
    return t;
  }
  double e[4] = {r1 * c1 / n, r1 * c2 / n, r2 * c1 / n, r2 * c2 / n};
  bool small = e[0] < 5.0 || e[1] < 5.0 || e[2] < 5.0 || e[3] < 5.0;
  if (small) return fisher_exact(a, b, c, d);
  double o[4] = {static_cast<double>(a), static_cast<double>(b),
                 static_cast<double>(c), static_cast<double>(d)};
  double chi2 = 0.0;
  for (int i = 0; i < 4; ++i) chi2 += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  t.method = TestMethod::chi_square;
  t.statistic = chi2;
  t.p_value = chi2_sf1(chi2);
  return t;
}

double cohen_h(double p1, double p2) {
  auto phi = [](double p) { return std::asin(std::sqrt(std::clamp(p, 0.0, 1.0))); };
  return 2.0 * (phi(p1) - phi(p2));
}

TestResult permutation_test(const std::vector<double>& group_a,
                            const std::vector<double>& group_b,
                            std::int64_t n_perm, std::uint64_t seed) {
  if (group_a.empty() || group_b.empty()) throw DataError("permutation_test: empty group");
  if (n_perm < 1) throw ConfigError("permutation_test: n_perm must be >= 1");
  auto mean = [](const double* p, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s / static_cast<double>(n);
  };
  double observed = mean(group_a.data(), group_a.size()) -
                    mean(group_b.data(), group_b.size());
  // Canonical group order keeps the resample stream, and therefore the
  // two-tailed p, invariant under swapping the groups.
  const std::vector<double>* first = &group_a;
  const std::vector<double>* second = &group_b;
  if (second->size() < first->size() ||
      (second->size() == first->size() && *second < *first))
    std::swap(first, second);
  std::size_t na = first->size();
  std::vector<double> pooled = *first;
  pooled.insert(pooled.end(), second->begin(), second->end());
  Rng rng(seed);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n_perm; ++i) {
    rng.shuffle(pooled);
    double stat =
        mean(pooled.data(), na) - mean(pooled.data() + na, pooled.size() - na);
    if (std::fabs(stat) >= std::fabs(observed) - 1e-12) ++hits;
  }
  TestResult t;
  t.method = TestMethod::permutation;
  t.statistic = observed;
  t.n_resamples = n_perm;
  // Phipson-Smyth add-one estimator: valid finite-resample p, never 0.
  t.p_value = static_cast<double>(hits + 1) / static_cast<double>(n_perm + 1);
  return t;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DataError("quantile_sorted: empty sample");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  // Nearest-rank: smallest value with cumulative fraction >= q.
  std::size_t n = sorted.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return sorted[rank - 1];
}

std::pair<double, double> bootstrap_ci(
    const std::vector<double>& values,
    const std::function<double(const std::vector<double>&)>& statistic,
    std::int64_t n_boot, double level, std::uint64_t seed) {
  if (values.size() < 2) throw DataError("bootstrap_ci: need >= 2 observations");
  if (n_boot < 1) throw ConfigError("bootstrap_ci: n_boot must be >= 1");
  Rng rng(seed);
  std::vector<double> resample(values.size());
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(n_boot));
  for (std::int64_t i = 0; i < n_boot; ++i) {
    for (auto& v : resample) v = values[rng.next_below(values.size())];
    stats.push_back(statistic(resample));
  }
  std::sort(stats.begin(), stats.end());
  double alpha = 1.0 - level;
  return {quantile_sorted(stats, alpha / 2.0), quantile_sorted(stats, 1.0 - alpha / 2.0)};
}

std::pair<double, double> bootstrap_ci_mean(const std::vector<double>& values,
                                            std::int64_t n_boot, double level,
                                            std::uint64_t seed) {
  return bootstrap_ci(
      values,
      [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      },
      n_boot, level, seed);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of 1-based ranks
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("spearman: length mismatch");
  if (x.size() < 2) throw DataError("spearman: need >= 2 points");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  SpearmanResult r;
  if (sxx == 0.0 || syy == 0.0) {
    r.zero_variance = true;
    return r;
  }
  r.rho = sxy / std::sqrt(sxx * syy);
  return r;
}

double normalized_entropy(const std::array<std::int64_t, 6>& counts) {
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw DataError("normalized_entropy: negative count");
    total += c;
  }
  if (total < 1) throw DataError("normalized_entropy: total must be >= 1");
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h / std::log(6.0);
}

}  // namespace caudit::stats
