#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "caudit/calibrate.hpp"
#include "caudit/rng.hpp"

using namespace caudit;
using namespace caudit::calibrate;

namespace {

// Exhaustive optimal monotone fit: every partition of the index range into
// consecutive blocks, fitted value = block mean, keep the monotone one with
// the smallest squared error. Independent of the PAVA path.
std::vector<double> brute_force_monotone(const std::vector<double>& y) {
  std::size_t n = y.size();
  std::vector<double> best_fit;
  double best_sse = 1e300;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<std::size_t> cuts{0};
    for (std::size_t i = 0; i + 1 < n; ++i)
      if (mask >> i & 1u) cuts.push_back(i + 1);
    cuts.push_back(n);
    std::vector<double> fit;
    bool monotone = true;
    double prev = -1e300;
    for (std::size_t b = 0; b + 1 < cuts.size(); ++b) {
      double sum = 0.0;
      for (std::size_t i = cuts[b]; i < cuts[b + 1]; ++i) sum += y[i];
      double mean = sum / static_cast<double>(cuts[b + 1] - cuts[b]);
      if (mean < prev - 1e-12) {
        monotone = false;
        break;
      }
      prev = mean;
      for (std::size_t i = cuts[b]; i < cuts[b + 1]; ++i) fit.push_back(mean);
    }
    if (!monotone) continue;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += (fit[i] - y[i]) * (fit[i] - y[i]);
    if (sse < best_sse - 1e-12) {
      best_sse = sse;
      best_fit = fit;
    }
  }
  return best_fit;
}

std::vector<double> fitted_values(const IsotonicMap& map) {
  std::vector<double> v;
  for (const auto& [x, y] : map.steps) v.push_back(y);
  return v;
}

}  // namespace

TEST_CASE("brier score") {
  CHECK(brier({1, 0, 1}, {1, 0, 1}) == 0.0);
  CHECK(brier({0.5, 0.5}, {1, 0}) == doctest::Approx(0.25));
  CHECK(brier({0.9, 0.2}, {1, 0}) == doctest::Approx(0.025));
  CHECK_THROWS_AS(brier({}, {}), DataError);
  CHECK_THROWS_AS(brier({0.5}, {2}), DataError);
  CHECK_THROWS_AS(brier({1.5}, {1}), DataError);
}

TEST_CASE("isotonic fit on the worked examples") {
  auto identity = fit_isotonic({{0.1, 0}, {0.2, 0}, {0.8, 1}, {0.9, 1}});
  CHECK(fitted_values(identity) == std::vector<double>{0, 0, 1, 1});

  auto pooled = fit_isotonic({{0.1, 0}, {0.3, 1}, {0.6, 0}, {0.9, 1}});
  auto vals = fitted_values(pooled);
  REQUIRE(vals.size() == 4);
  CHECK(vals[0] == doctest::Approx(0.0));
  CHECK(vals[1] == doctest::Approx(0.5));
  CHECK(vals[2] == doctest::Approx(0.5));
  CHECK(vals[3] == doctest::Approx(1.0));

  auto single = fit_isotonic({{0.7, 1}});
  CHECK(single.apply(0.1) == 1.0);
  CHECK(single.apply(0.99) == 1.0);

  CHECK_THROWS_AS(fit_isotonic({}), DataError);
}

TEST_CASE("isotonic ties in confidence pool before fitting") {
  auto map = fit_isotonic({{0.5, 0}, {0.5, 1}, {0.9, 1}});
  REQUIRE(map.steps.size() == 2);
  CHECK(map.steps[0].first == 0.5);
  CHECK(map.steps[0].second == doctest::Approx(0.5));
  CHECK(map.steps[1].second == doctest::Approx(1.0));
}

TEST_CASE("isotonic equals brute-force optimal monotone fit") {
  const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t n = 1; n <= 5; ++n) {
    std::vector<std::size_t> idx(n, 0);
    for (;;) {
      std::vector<double> y;
      std::vector<std::pair<double, double>> pairs;
      for (std::size_t i = 0; i < n; ++i) {
        y.push_back(grid[idx[i]]);
        pairs.emplace_back(0.1 * static_cast<double>(i + 1), grid[idx[i]]);
      }
      auto fit = fitted_values(fit_isotonic(pairs));
      auto oracle = brute_force_monotone(y);
      REQUIRE(fit.size() == oracle.size());
      for (std::size_t i = 0; i < n; ++i)
        CHECK(fit[i] == doctest::Approx(oracle[i]).epsilon(1e-9));
      std::size_t carry = 0;
      while (carry < n && ++idx[carry] == 5) idx[carry++] = 0;
      if (carry == n) break;
    }
  }
}

TEST_CASE("isotonic output monotone and brier-improving on random pairs") {
  Rng rng(1234);
  for (int round = 0; round < 30; ++round) {
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> raw;
    std::vector<int> outcomes;
    std::size_t n = 2 + rng.next_below(40);
    for (std::size_t i = 0; i < n; ++i) {
      double conf = rng.next_double();
      int correct = rng.next_double() < conf * 0.8 + 0.1 ? 1 : 0;
      pairs.emplace_back(conf, correct);
      raw.push_back(conf);
      outcomes.push_back(correct);
    }
    auto map = fit_isotonic(pairs);
    for (std::size_t i = 1; i < map.steps.size(); ++i) {
      CHECK(map.steps[i].second >= map.steps[i - 1].second - 1e-12);
      CHECK(map.steps[i].first >= map.steps[i - 1].first);
    }
    // Monotone on arbitrary query points, clamped to [0,1].
    double prev = -1.0;
    for (double q = 0.0; q <= 1.0; q += 0.05) {
      double v = map.apply(q);
      CHECK(v >= prev - 1e-12);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      prev = v;
    }
    std::vector<double> cal;
    for (double c : raw) cal.push_back(map.apply(c));
    CHECK(brier(cal, outcomes) <= brier(raw, outcomes) + 1e-9);
  }
}

TEST_CASE("temperature fit recovers T=1 on a constructed optimum") {
  // One-hot-ish correct predictions: any T != 1 flattens or sharpens away
  // from the empirical distribution only mildly; T = 1 minimizes NLL when the
  // distribution already matches outcome frequencies. Construct via
  // self-consistent sampling: label k has probability dist[k].
  std::vector<LabelDist> dists;
  std::vector<Label> gold;
  LabelDist base{0.55, 0.15, 0.1, 0.1, 0.05, 0.05};
  // Use each label as gold proportionally to its probability (x100 copies).
  for (int k = 0; k < 6; ++k) {
    int copies = static_cast<int>(std::lround(base[k] * 100));
    for (int i = 0; i < copies; ++i) {
      dists.push_back(base);
      gold.push_back(kLabels[k]);
    }
  }
  auto fit = fit_temperature(dists, gold);
  CHECK(std::fabs(fit.map.temperature - 1.0) <= 1e-3);
}

TEST_CASE("temperature fit detects overconfidence via grid oracle") {
  // Overconfident set: stated probability 0.9 but only ~60% correct.
  std::vector<LabelDist> dists;
  std::vector<Label> gold;
  LabelDist sharp{0.9, 0.02, 0.02, 0.02, 0.02, 0.02};
  for (int i = 0; i < 10; ++i) {
    dists.push_back(sharp);
    gold.push_back(i < 6 ? Label::V : Label::B);
  }
  auto fit = fit_temperature(dists, gold);
  CHECK(fit.map.temperature > 1.0);

  // Coarse grid oracle over T confirms the minimizer region.
  auto nll = [&](double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
      LabelDist logits{};
      double mx = -1e300;
      for (int k = 0; k < 6; ++k) {
        logits[k] = std::log(std::max(dists[i][k], 1e-9)) / t;
        mx = std::max(mx, logits[k]);
      }
      double z = 0.0;
      for (double v : logits) z += std::exp(v - mx);
      s -= logits[static_cast<int>(gold[i])] - mx - std::log(z);
    }
    return s / static_cast<double>(dists.size());
  };
  double best_t = 0.05, best_v = nll(0.05);
  for (double t = 0.05; t <= 20.0; t += 0.01) {
    if (nll(t) < best_v) {
      best_v = nll(t);
      best_t = t;
    }
  }
  CHECK(std::fabs(fit.map.temperature - best_t) <= 0.02);
  CHECK(nll(fit.map.temperature) <= best_v + 1e-6);
}

TEST_CASE("temperature fit single correct example pins the lower bound") {
  std::vector<LabelDist> dists = {{0.7, 0.1, 0.05, 0.05, 0.05, 0.05}};
  auto fit = fit_temperature(dists, {Label::V});
  CHECK(fit.map.temperature == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(fit.degenerate_at_bound);
}

TEST_CASE("temperature map preserves argmax and T=1 is identity") {
  LabelDist d{0.4, 0.3, 0.1, 0.1, 0.05, 0.05};
  TemperatureMap identity{1.0};
  auto out = identity.apply(d);
  for (int k = 0; k < 6; ++k) CHECK(out[k] == doctest::Approx(d[k]).epsilon(1e-9));
  for (double t : {0.1, 0.7, 2.0, 15.0}) {
    TemperatureMap map{t};
    auto scaled = map.apply(d);
    CHECK(std::distance(scaled.begin(), std::max_element(scaled.begin(), scaled.end())) == 0);
    double sum = 0.0;
    for (double v : scaled) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Zeros are floored, not fatal.
  std::vector<LabelDist> with_zero = {{1.0, 0.0, 0.0, 0.0, 0.0, 0.0},
                                      {0.5, 0.5, 0.0, 0.0, 0.0, 0.0}};
  auto fit = fit_temperature(with_zero, {Label::V, Label::B});
  CHECK(fit.floored_zeros > 0);
}

TEST_CASE("selective curve coverage and accuracy") {
  std::vector<double> conf = {0.95, 0.92, 0.91, 0.5, 0.4, 0.3, 0.2, 0.15, 0.1, 0.05};
  std::vector<int> correct = {1, 1, 0, 1, 0, 1, 0, 0, 1, 0};
  auto curve = selective_curve(conf, correct, {0.0, 0.9});
  REQUIRE(curve.size() == 2);
  CHECK(curve[0].coverage == doctest::Approx(1.0));
  CHECK(*curve[0].accuracy == doctest::Approx(0.5));
  CHECK(curve[1].coverage == doctest::Approx(0.3));
  CHECK(*curve[1].accuracy == doctest::Approx(2.0 / 3.0));

  auto empty_tail = selective_curve({0.1, 0.2}, {1, 0}, {0.0, 0.99});
  CHECK(empty_tail[1].coverage == 0.0);
  CHECK(!empty_tail[1].accuracy.has_value());

  CHECK_THROWS_AS(selective_curve(conf, correct, {0.9, 0.1}), ConfigError);

  // Coverage nonincreasing in tau on random data.
  Rng rng(5);
  for (int round = 0; round < 10; ++round) {
    std::vector<double> c;
    std::vector<int> o;
    for (int i = 0; i < 50; ++i) {
      c.push_back(rng.next_double());
      o.push_back(static_cast<int>(rng.next_below(2)));
    }
    std::vector<double> taus;
    for (double t = 0.0; t <= 1.0; t += 0.1) taus.push_back(t);
    auto pts = selective_curve(c, o, taus);
    for (std::size_t i = 1; i < pts.size(); ++i)
      CHECK(pts[i].coverage <= pts[i - 1].coverage + 1e-12);
    CHECK(pts[0].coverage == 1.0);
  }
}
