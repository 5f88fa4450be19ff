#include "caudit/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace caudit::calibrate {

double IsotonicMap::apply(double confidence) const {
  if (steps.empty()) return confidence;
  if (confidence <= steps.front().first) return steps.front().second;
  // Largest breakpoint <= confidence.
  auto it = std::upper_bound(steps.begin(), steps.end(), confidence,
                             [](double v, const auto& s) { return v < s.first; });
  return std::prev(it)->second;
}

IsotonicMap fit_isotonic(std::vector<std::pair<double, double>> pairs) {
  if (pairs.empty()) throw DataError("fit_isotonic: need >= 1 pair");
  std::sort(pairs.begin(), pairs.end());

  // Pool ties in confidence into weighted points.
  struct Point {
    double x;
    double sum;
    double weight;
  };
  std::vector<Point> pts;
  for (const auto& [x, y] : pairs) {
    if (!pts.empty() && pts.back().x == x) {
      pts.back().sum += y;
      pts.back().weight += 1.0;
    } else {
      pts.push_back({x, y, 1.0});
    }
  }

  // PAVA over the pooled points.
  struct Block {
    double sum, weight;
    std::size_t first, last;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    blocks.push_back({pts[i].sum, pts[i].weight, i, i});
    while (blocks.size() > 1 &&
           blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().weight += top.weight;
      blocks.back().last = top.last;
    }
  }

  IsotonicMap map;
  for (const auto& b : blocks) {
    double v = std::clamp(b.mean(), 0.0, 1.0);
    for (std::size_t i = b.first; i <= b.last; ++i)
      map.steps.emplace_back(pts[i].x, v);
  }
  return map;
}

LabelDist TemperatureMap::apply(const LabelDist& dist) const {
  LabelDist logit{};
  double mx = -1e300;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    logit[i] = std::log(std::max(dist[i], 1e-9)) / temperature;
    mx = std::max(mx, logit[i]);
  }
  double z = 0.0;
  for (auto& v : logit) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : logit) v /= z;
  return logit;
}

namespace {

double mean_nll(double t, const std::vector<LabelDist>& dists,
                const std::vector<Label>& gold, std::int64_t* floored) {
  double s = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    LabelDist logit{};
    double mx = -1e300;
    for (std::size_t k = 0; k < 6; ++k) {
      double p = dists[i][k];
      if (p <= 0.0 && floored) ++*floored;
      logit[k] = std::log(std::max(p, 1e-9)) / t;
      mx = std::max(mx, logit[k]);
    }
    double z = 0.0;
    for (auto v : logit) z += std::exp(v - mx);
    s -= logit[static_cast<int>(gold[i])] - mx - std::log(z);
  }
  return s / static_cast<double>(dists.size());
}

}  // namespace

TemperatureFit fit_temperature(const std::vector<LabelDist>& distributions,
                               const std::vector<Label>& gold) {
  if (distributions.empty()) throw DataError("fit_temperature: need >= 1 example");
  if (distributions.size() != gold.size())
    throw DataError("fit_temperature: length mismatch");

  const double lo_bound = 0.05, hi_bound = 20.0, tol = 1e-4;
  TemperatureFit fit;
  std::int64_t floored = 0;
  mean_nll(1.0, distributions, gold, &floored);  // count floor events once
  fit.floored_zeros = floored;
  auto f = [&](double t) { return mean_nll(t, distributions, gold, nullptr); };

  // Coarse grid guards against non-unimodal surfaces, golden-section refines.
  const int kGrid = 64;
  double best_t = lo_bound, best_v = f(lo_bound);
  for (int i = 1; i <= kGrid; ++i) {
    double t = lo_bound * std::pow(hi_bound / lo_bound, static_cast<double>(i) / kGrid);
    double v = f(t);
    if (v < best_v) {
      best_v = v;
      best_t = t;
    }
  }
  double lo = std::max(lo_bound, best_t / 2.0);
  double hi = std::min(hi_bound, best_t * 2.0);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  double t_star = 0.5 * (a + b);
  if (f(lo_bound) <= f(t_star)) t_star = lo_bound;
  if (f(hi_bound) < f(t_star)) t_star = hi_bound;
  fit.map.temperature = t_star;
  fit.nll = f(t_star);
  fit.degenerate_at_bound =
      t_star <= lo_bound + tol || t_star >= hi_bound - tol;
  return fit;
}

double brier(const std::vector<double>& confidences, const std::vector<int>& outcomes) {
  if (confidences.empty()) throw DataError("brier: empty input");
  if (confidences.size() != outcomes.size()) throw DataError("brier: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double f = confidences[i];
    int o = outcomes[i];
    if (f < 0.0 || f > 1.0) throw DataError("brier: confidence outside [0,1]");
    if (o != 0 && o != 1) throw DataError("brier: outcome not in {0,1}");
    double d = f - static_cast<double>(o);
    s += d * d;
  }
  return s / static_cast<double>(confidences.size());
}

std::vector<SelectivePoint> selective_curve(const std::vector<double>& confidences,
                                            const std::vector<int>& correct,
                                            const std::vector<double>& taus) {
  if (confidences.size() != correct.size())
    throw DataError("selective_curve: length mismatch");
  if (!std::is_sorted(taus.begin(), taus.end()))
    throw ConfigError("selective_curve: taus must be ascending");
  std::vector<SelectivePoint> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    SelectivePoint p;
    p.tau = tau;
    std::int64_t kept = 0, right = 0;
    for (std::size_t i = 0; i < confidences.size(); ++i) {
      if (confidences[i] >= tau) {
        ++kept;
        right += correct[i] ? 1 : 0;
      }
    }
    p.coverage = confidences.empty()
                     ? 0.0
                     : static_cast<double>(kept) / static_cast<double>(confidences.size());
    if (kept > 0) p.accuracy = static_cast<double>(right) / static_cast<double>(kept);
    out.push_back(p);
  }
  return out;
}

}  // namespace caudit::calibrate
