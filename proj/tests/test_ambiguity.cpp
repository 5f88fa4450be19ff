#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "caudit/ambiguity.hpp"
#include "caudit/rng.hpp"

using namespace caudit;
using namespace caudit::ambiguity;

namespace {

Prediction pred(Label label, double conf, const std::string& model) {
  Prediction p;
  p.event_id = "e";
  p.model_id = model;
  p.label = label;
  p.confidence = conf;
  return p;
}

std::vector<Prediction> six(const std::array<Label, 6>& labels,
                            const std::array<double, 6>& confs) {
  std::vector<Prediction> v;
  for (int i = 0; i < 6; ++i)
    v.push_back(pred(labels[i], confs[i], "m" + std::to_string(i)));
  return v;
}

}  // namespace

TEST_CASE("text ambiguity indicator arithmetic") {
  CHECK(text_ambiguity("Unidentified armed group shot and killed a civilian") ==
        doctest::Approx(0.75));
  CHECK(text_ambiguity("Teachers held a peaceful protest") == 0.0);
  // Organized marker + civilian victim + untargeted kinetic verbs.
  CHECK(text_ambiguity("Military forces shot and killed civilians in the village") ==
        doctest::Approx(0.5));
  // Targeting language suppresses the third indicator.
  CHECK(text_ambiguity("Military deliberately targeted and killed civilians") ==
        doctest::Approx(0.25));
  // Clipped to [0,1] on arbitrary text.
  Rng rng(4);
  const char* words[] = {"unidentified", "civilian", "military", "killed",
                         "targeted", "protest", "village", "gunmen"};
  for (int i = 0; i < 50; ++i) {
    std::string text;
    for (int w = 0; w < 6; ++w) text += std::string(words[rng.next_below(8)]) + " ";
    double s = text_ambiguity(text);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("score_event component arithmetic on the worked cases") {
  // Unanimous six models at confidence 1.0 on neutral text.
  auto unanimous = six({Label::B, Label::B, Label::B, Label::B, Label::B, Label::B},
                       {1, 1, 1, 1, 1, 1});
  auto s = score_event(unanimous, "Teachers held a peaceful protest");
  CHECK(s.total == doctest::Approx(0.0));
  CHECK(s.tier == Tier::low);

  // 3/3 split at confidence 0.5: 0.35*ln2/ln6 + 0.25*0.5 = 0.2604.
  auto split = six({Label::V, Label::V, Label::V, Label::B, Label::B, Label::B},
                   {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  auto s2 = score_event(split, "Teachers held a peaceful protest");
  CHECK(s2.label_entropy == doctest::Approx(std::log(2.0) / std::log(6.0)));
  CHECK(s2.confidence_uncertainty == doctest::Approx(0.5));
  CHECK(s2.confidence_dispersion == doctest::Approx(0.0));
  CHECK(s2.total == doctest::Approx(0.2604).epsilon(1e-3));
  CHECK(s2.tier == Tier::low);

  // Uniform six-way split, mean confidence 0.2, dispersion at the cap,
  // text score 1: total 0.95, tier high.
  auto uniform = six({Label::V, Label::B, Label::E, Label::P, Label::R, Label::S},
                     {0.2, 0.2, 0.2, 0.2, 0.2, 0.2});
  auto s3 = score_event(uniform, "x");
  CHECK(s3.label_entropy == doctest::Approx(1.0));
  CHECK(s3.confidence_uncertainty == doctest::Approx(0.8));
  CHECK(s3.confidence_dispersion == doctest::Approx(0.0));
  double manufactured = 0.35 * 1.0 + 0.25 * 0.8 + 0.20 * 1.0 + 0.20 * 1.0;
  CHECK(manufactured == doctest::Approx(0.95));

  CHECK_THROWS_AS(score_event({pred(Label::V, 0.5, "only")}, "x"), DataError);
}

TEST_CASE("dispersion normalization caps at one") {
  // Confidences {0,1} have population std 0.5 -> dispersion exactly 1.
  std::vector<Prediction> two = {pred(Label::V, 0.0, "a"), pred(Label::V, 1.0, "b")};
  auto s = score_event(two, "x");
  CHECK(s.confidence_dispersion == doctest::Approx(1.0));
}

TEST_CASE("score invariant under model order permutation") {
  Rng rng(11);
  for (int round = 0; round < 20; ++round) {
    std::vector<Prediction> preds;
    int m = 2 + static_cast<int>(rng.next_below(5));
    for (int i = 0; i < m; ++i)
      preds.push_back(pred(kLabels[rng.next_below(6)], rng.next_double(),
                           "m" + std::to_string(i)));
    auto base = score_event(preds, "military killed civilian");
    std::vector<Prediction> shuffled = preds;
    rng.shuffle(shuffled);
    auto alt = score_event(shuffled, "military killed civilian");
    CHECK(base.total == doctest::Approx(alt.total).epsilon(1e-12));
    // Monotone weights: total bounded by the component sum.
    CHECK(base.total <= 1.0 + 1e-12);
    CHECK(base.total >= 0.0);
  }
}

TEST_CASE("tier boundary semantics and gate partition") {
  CHECK(tier_of(0.1) == Tier::low);
  CHECK(tier_of(0.29999) == Tier::low);
  CHECK(tier_of(0.3) == Tier::medium);
  CHECK(tier_of(0.59) == Tier::medium);
  CHECK(tier_of(0.6) == Tier::high);

  std::map<std::string, AmbiguityScore> scores;
  auto mk = [](double total) {
    AmbiguityScore s;
    s.total = total;
    s.tier = tier_of(total);
    return s;
  };
  scores["a"] = mk(0.1);
  scores["b"] = mk(0.3);
  scores["c"] = mk(0.59);
  scores["d"] = mk(0.6);
  auto gate = gate_low_ambiguity(scores);
  CHECK(gate.low_ambiguity_ids == std::set<std::string>{"a"});
  CHECK(gate.tier_histogram.at("low") == 1);
  CHECK(gate.tier_histogram.at("medium") == 2);
  CHECK(gate.tier_histogram.at("high") == 1);
  std::int64_t total = 0;
  for (const auto& [tier, n] : gate.tier_histogram) total += n;
  CHECK(total == static_cast<std::int64_t>(scores.size()));
}
