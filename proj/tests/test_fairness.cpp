#include <doctest.h>

#include <cmath>
#include <map>

#include "caudit/fairness.hpp"
#include "caudit/metrics.hpp"
#include "caudit/rng.hpp"

using namespace caudit;
using namespace caudit::fairness;

namespace {

struct Fixture {
  std::vector<Prediction> preds;
  std::map<std::string, Label> gold;
  std::map<std::string, ActorGroup> groups;

  void add(const std::string& id, ActorGroup g, Label gold_label, Label pred_label) {
    Prediction p;
    p.event_id = id;
    p.model_id = "m";
    p.label = pred_label;
    preds.push_back(p);
    gold[id] = gold_label;
    groups[id] = g;
  }
};

}  // namespace

TEST_CASE("statistical parity difference from direct counts") {
  Fixture f;
  // Group a: 3/4 predicted positive; group b: 1/4.
  f.add("a1", ActorGroup::State, Label::V, Label::V);
  f.add("a2", ActorGroup::State, Label::V, Label::V);
  f.add("a3", ActorGroup::State, Label::B, Label::V);
  f.add("a4", ActorGroup::State, Label::B, Label::B);
  f.add("b1", ActorGroup::NonState, Label::V, Label::V);
  f.add("b2", ActorGroup::NonState, Label::V, Label::B);
  f.add("b3", ActorGroup::NonState, Label::B, Label::B);
  f.add("b4", ActorGroup::NonState, Label::B, Label::B);
  auto r = statistical_parity(f.preds, f.groups, Label::V, 500, 0.95, 3);
  CHECK(r.spd == doctest::Approx(0.5));
  CHECK(r.ci.first <= r.spd);
  CHECK(r.ci.second >= r.spd);

  // Sign flips when groups are swapped.
  std::map<std::string, ActorGroup> swapped;
  for (auto& [id, g] : f.groups)
    swapped[id] = g == ActorGroup::State ? ActorGroup::NonState : ActorGroup::State;
  auto s = statistical_parity(f.preds, swapped, Label::V, 500, 0.95, 3);
  CHECK(s.spd == doctest::Approx(-0.5));
}

TEST_CASE("identical prediction rates give zero spd") {
  Fixture f;
  for (int i = 0; i < 6; ++i) {
    f.add("a" + std::to_string(i), ActorGroup::State, Label::V,
          i % 2 ? Label::V : Label::B);
    f.add("b" + std::to_string(i), ActorGroup::NonState, Label::V,
          i % 2 ? Label::V : Label::B);
  }
  auto r = statistical_parity(f.preds, f.groups, Label::V, 200, 0.95, 1);
  CHECK(r.spd == doctest::Approx(0.0));
}

TEST_CASE("equalized odds on the constructed eight-event set") {
  Fixture f;
  // Group a: TPR 1.0 (2/2), FPR 0 (0/2). Group b: TPR 0.5 (1/2), FPR 0 (0/2).
  f.add("a1", ActorGroup::State, Label::V, Label::V);
  f.add("a2", ActorGroup::State, Label::V, Label::V);
  f.add("a3", ActorGroup::State, Label::B, Label::B);
  f.add("a4", ActorGroup::State, Label::B, Label::E);
  f.add("b1", ActorGroup::NonState, Label::V, Label::V);
  f.add("b2", ActorGroup::NonState, Label::V, Label::B);
  f.add("b3", ActorGroup::NonState, Label::B, Label::B);
  f.add("b4", ActorGroup::NonState, Label::B, Label::S);
  auto odds = equalized_odds(f.preds, f.gold, f.groups, Label::V);
  REQUIRE(odds.d_tpr.has_value());
  REQUIRE(odds.d_fpr.has_value());
  CHECK(*odds.d_tpr == doctest::Approx(0.5));
  CHECK(*odds.d_fpr == doctest::Approx(0.0));
  CHECK(odds.counts_a.tp == 2);
  CHECK(odds.counts_a.fn == 0);
  CHECK(odds.counts_b.tp == 1);
  CHECK(odds.counts_b.fn == 1);
  // TP+FN equals group gold positives.
  CHECK(odds.counts_a.tp + odds.counts_a.fn == 2);

  // Swapping groups negates both gaps.
  std::map<std::string, ActorGroup> swapped;
  for (auto& [id, g] : f.groups)
    swapped[id] = g == ActorGroup::State ? ActorGroup::NonState : ActorGroup::State;
  auto rev = equalized_odds(f.preds, f.gold, swapped, Label::V);
  CHECK(*rev.d_tpr == doctest::Approx(-0.5));
  CHECK(*rev.d_fpr == doctest::Approx(0.0));
}

TEST_CASE("one-vs-rest rates agree with the collapsed confusion matrix") {
  Rng rng(41);
  Fixture f;
  for (int i = 0; i < 120; ++i) {
    f.add("e" + std::to_string(i),
          rng.next_below(2) ? ActorGroup::State : ActorGroup::NonState,
          kLabels[rng.next_below(6)], kLabels[rng.next_below(6)]);
  }
  for (Label positive : {Label::V, Label::B}) {
    auto odds = equalized_odds(f.preds, f.gold, f.groups, positive);
    for (ActorGroup g : {ActorGroup::State, ActorGroup::NonState}) {
      std::vector<Prediction> sub;
      std::map<std::string, Label> sub_gold;
      for (const auto& p : f.preds) {
        if (f.groups[p.event_id] != g) continue;
        sub.push_back(p);
        sub_gold[p.event_id] = f.gold[p.event_id];
      }
      auto six = metrics::score(sub, sub_gold);
      int k = static_cast<int>(positive);
      std::int64_t tp = six.confusion.counts[k][k];
      std::int64_t fn = six.confusion.row_sums()[k] - tp;
      std::int64_t fp = six.confusion.col_sums()[k] - tp;
      std::int64_t tn = six.confusion.total() - tp - fn - fp;
      const auto& counts =
          g == ActorGroup::State ? odds.counts_a : odds.counts_b;
      CHECK(counts.tp == tp);
      CHECK(counts.fn == fn);
      CHECK(counts.fp == fp);
      CHECK(counts.tn == tn);
    }
  }
}

TEST_CASE("undefined rates are null-flagged, Other group excluded") {
  Fixture f;
  // Group b has no gold positives: TPR gap undefined.
  f.add("a1", ActorGroup::State, Label::V, Label::V);
  f.add("a2", ActorGroup::State, Label::B, Label::B);
  f.add("b1", ActorGroup::NonState, Label::B, Label::B);
  f.add("o1", ActorGroup::Other, Label::V, Label::V);
  auto odds = equalized_odds(f.preds, f.gold, f.groups, Label::V);
  CHECK(!odds.d_tpr.has_value());
  CHECK(odds.d_fpr.has_value());

  auto report = audit_fairness(f.preds, f.gold, f.groups, Label::V, 100, 100, 5);
  CHECK(report.excluded_other == 1);
  CHECK(!report.p_tpr.has_value());
}

TEST_CASE("identical groups give p near 1, separated groups hit the floor") {
  Fixture ident;
  for (int i = 0; i < 10; ++i) {
    Label pl = i % 2 ? Label::V : Label::B;
    ident.add("a" + std::to_string(i), ActorGroup::State, Label::V, pl);
    ident.add("b" + std::to_string(i), ActorGroup::NonState, Label::V, pl);
  }
  auto sig = fairness_significance(ident.preds, ident.gold, ident.groups, Label::V, 999, 7);
  REQUIRE(sig.p_tpr.has_value());
  CHECK(*sig.p_tpr == doctest::Approx(1.0).epsilon(0.02));

  Fixture sep;
  for (int i = 0; i < 10; ++i) {
    sep.add("a" + std::to_string(i), ActorGroup::State, Label::V, Label::V);
    sep.add("b" + std::to_string(i), ActorGroup::NonState, Label::V, Label::B);
  }
  auto hard = fairness_significance(sep.preds, sep.gold, sep.groups, Label::V, 999, 7);
  REQUIRE(hard.p_tpr.has_value());
  // C(20,10) = 184k splits, two of which reach |diff| = 1; with the add-one
  // estimator over 999 resamples the p-value sits near its floor.
  CHECK(*hard.p_tpr < 0.02);
}

TEST_CASE("null calibration: permutation p uniform over simulated nulls") {
  // 200 simulated datasets with no group effect; the p-values should pass a
  // Kolmogorov-Smirnov uniformity check at alpha = 0.01. Groups are large so
  // the discreteness of the indicator statistic stays below the KS radar.
  const int kPerGroup = 768;
  Rng rng(8675309);
  std::vector<double> pvals;
  for (int sim = 0; sim < 200; ++sim) {
    Fixture f;
    for (int i = 0; i < 2 * kPerGroup; ++i) {
      ActorGroup g = i < kPerGroup ? ActorGroup::State : ActorGroup::NonState;
      Label pl = rng.next_double() < 0.5 ? Label::V : Label::B;
      f.add("e" + std::to_string(i), g, Label::V, pl);
    }
    auto sig = fairness_significance(f.preds, f.gold, f.groups, Label::V, 300,
                                     1000 + static_cast<std::uint64_t>(sim));
    if (sig.p_tpr) pvals.push_back(*sig.p_tpr);
  }
  REQUIRE(pvals.size() == 200);
  std::sort(pvals.begin(), pvals.end());
  double d = 0.0;
  for (std::size_t i = 0; i < pvals.size(); ++i) {
    double f_emp_hi = static_cast<double>(i + 1) / 200.0;
    double f_emp_lo = static_cast<double>(i) / 200.0;
    d = std::max(d, std::max(f_emp_hi - pvals[i], pvals[i] - f_emp_lo));
  }
  double critical = 1.62762 / std::sqrt(200.0);  // alpha = 0.01
  CHECK(d < critical);
}

TEST_CASE("fairness p-values invariant under group swap") {
  Fixture f;
  Rng rng(303);
  for (int i = 0; i < 40; ++i) {
    f.add("e" + std::to_string(i),
          i % 2 ? ActorGroup::State : ActorGroup::NonState,
          rng.next_below(2) ? Label::V : Label::B,
          rng.next_below(2) ? Label::V : Label::B);
  }
  std::map<std::string, ActorGroup> swapped;
  for (auto& [id, g] : f.groups)
    swapped[id] = g == ActorGroup::State ? ActorGroup::NonState : ActorGroup::State;
  auto sig = fairness_significance(f.preds, f.gold, f.groups, Label::V, 500, 21);
  auto rev = fairness_significance(f.preds, f.gold, swapped, Label::V, 500, 21);
  REQUIRE(sig.p_tpr.has_value());
  CHECK(*sig.p_tpr == *rev.p_tpr);
  CHECK(*sig.p_fpr == *rev.p_fpr);
}
