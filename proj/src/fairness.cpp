#include "caudit/fairness.hpp"

#include <algorithm>

#include "caudit/rng.hpp"

namespace caudit::fairness {

namespace {

struct Slices {
  std::vector<double> pos_a, pos_b;          // predicted-positive indicators
  std::vector<double> tpr_a, tpr_b;          // indicators on gold positives
  std::vector<double> fpr_a, fpr_b;          // indicators on gold negatives
  GroupCounts counts_a, counts_b;
  std::int64_t excluded_other = 0;
};

Slices slice(const std::vector<Prediction>& predictions,
             const std::map<std::string, Label>* gold,
             const std::map<std::string, ActorGroup>& groups, Label positive) {
  Slices s;
  for (const auto& p : predictions) {
    auto git = groups.find(p.event_id);
    if (git == groups.end())
      throw DataError("fairness: no actor group for " + p.event_id);
    ActorGroup g = git->second;
    if (g == ActorGroup::Other) {
      ++s.excluded_other;
      continue;
    }
    bool is_a = g == ActorGroup::State;
    GroupCounts& c = is_a ? s.counts_a : s.counts_b;
    ++c.n;
    double pred_pos = p.label == positive ? 1.0 : 0.0;
    c.predicted_positive += pred_pos > 0.5 ? 1 : 0;
    (is_a ? s.pos_a : s.pos_b).push_back(pred_pos);
    if (!gold) continue;
    auto it = gold->find(p.event_id);
    if (it == gold->end()) throw DataError("fairness: no gold label for " + p.event_id);
    bool gold_pos = it->second == positive;
    if (gold_pos) {
      (pred_pos > 0.5 ? c.tp : c.fn) += 1;
      (is_a ? s.tpr_a : s.tpr_b).push_back(pred_pos);
    } else {
      (pred_pos > 0.5 ? c.fp : c.tn) += 1;
      (is_a ? s.fpr_a : s.fpr_b).push_back(pred_pos);
    }
  }
  return s;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

SpdResult statistical_parity(const std::vector<Prediction>& predictions,
                             const std::map<std::string, ActorGroup>& groups,
                             Label positive_label, std::int64_t n_boot, double level,
                             std::uint64_t seed) {
  Slices s = slice(predictions, nullptr, groups, positive_label);
  if (s.pos_a.empty() || s.pos_b.empty())
    throw DataError("statistical_parity: empty group");
  SpdResult r;
  r.spd = mean(s.pos_a) - mean(s.pos_b);

  Rng rng(seed);
  std::vector<double> stats_v;
  stats_v.reserve(static_cast<std::size_t>(n_boot));
  std::vector<double> ra(s.pos_a.size()), rb(s.pos_b.size());
  for (std::int64_t i = 0; i < n_boot; ++i) {
    for (auto& v : ra) v = s.pos_a[rng.next_below(s.pos_a.size())];
    for (auto& v : rb) v = s.pos_b[rng.next_below(s.pos_b.size())];
    stats_v.push_back(mean(ra) - mean(rb));
  }
  std::sort(stats_v.begin(), stats_v.end());
  double alpha = 1.0 - level;
  r.ci = {stats::quantile_sorted(stats_v, alpha / 2.0),
          stats::quantile_sorted(stats_v, 1.0 - alpha / 2.0)};
  return r;
}

OddsGaps equalized_odds(const std::vector<Prediction>& predictions,
                        const std::map<std::string, Label>& gold,
                        const std::map<std::string, ActorGroup>& groups,
                        Label positive_label) {
  Slices s = slice(predictions, &gold, groups, positive_label);
  OddsGaps g;
  g.counts_a = s.counts_a;
  g.counts_b = s.counts_b;
  if (!s.tpr_a.empty() && !s.tpr_b.empty())
    g.d_tpr = mean(s.tpr_a) - mean(s.tpr_b);
  if (!s.fpr_a.empty() && !s.fpr_b.empty())
    g.d_fpr = mean(s.fpr_a) - mean(s.fpr_b);
  return g;
}

SignificanceResult fairness_significance(const std::vector<Prediction>& predictions,
                                         const std::map<std::string, Label>& gold,
                                         const std::map<std::string, ActorGroup>& groups,
                                         Label positive_label, std::int64_t n_perm,
                                         std::uint64_t seed) {
  Slices s = slice(predictions, &gold, groups, positive_label);
  SignificanceResult r;
  if (!s.tpr_a.empty() && !s.tpr_b.empty())
    r.p_tpr = stats::permutation_test(s.tpr_a, s.tpr_b, n_perm, seed).p_value;
  if (!s.fpr_a.empty() && !s.fpr_b.empty())
    r.p_fpr = stats::permutation_test(s.fpr_a, s.fpr_b, n_perm, seed ^ 0x9E3779B9ULL).p_value;
  return r;
}

FairnessReport audit_fairness(const std::vector<Prediction>& predictions,
                              const std::map<std::string, Label>& gold,
                              const std::map<std::string, ActorGroup>& groups,
                              Label positive_label, std::int64_t n_boot,
                              std::int64_t n_perm, std::uint64_t seed) {
  FairnessReport report;
  report.positive_label = positive_label;
  auto spd = statistical_parity(predictions, groups, positive_label, n_boot, 0.95, seed);
  report.spd = spd.spd;
  report.spd_ci = spd.ci;
  auto odds = equalized_odds(predictions, gold, groups, positive_label);
  report.d_tpr = odds.d_tpr;
  report.d_fpr = odds.d_fpr;
  report.counts_a = odds.counts_a;
  report.counts_b = odds.counts_b;
  Slices s = slice(predictions, &gold, groups, positive_label);
  report.excluded_other = s.excluded_other;
  auto sig =
      fairness_significance(predictions, gold, groups, positive_label, n_perm, seed);
  report.p_tpr = sig.p_tpr;
  report.p_fpr = sig.p_fpr;
  return report;
}

}  // namespace caudit::fairness
