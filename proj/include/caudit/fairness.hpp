#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caudit/stats.hpp"
#include "caudit/types.hpp"

namespace caudit::fairness {

// One-vs-rest confusion cells for a group under a chosen positive label.
struct GroupCounts {
  std::int64_t n = 0;
  std::int64_t predicted_positive = 0;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct FairnessReport {
  Label positive_label = Label::V;
  ActorGroup group_a = ActorGroup::State;
  ActorGroup group_b = ActorGroup::NonState;
  double spd = 0.0;
  std::pair<double, double> spd_ci{0.0, 0.0};
  std::optional<double> d_tpr;  // null when a group lacks gold positives
  std::optional<double> d_fpr;  // null when a group lacks gold negatives
  std::optional<double> p_tpr;
  std::optional<double> p_fpr;
  GroupCounts counts_a, counts_b;
  std::int64_t excluded_other = 0;  // actor_group Other, outside the two-group audit
};

struct SpdResult {
  double spd = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
};

// P(pred = positive | group a) - P(pred = positive | group b), with a
// group-resampled bootstrap interval.
SpdResult statistical_parity(const std::vector<Prediction>& predictions,
                             const std::map<std::string, ActorGroup>& groups,
                             Label positive_label, std::int64_t n_boot = 1000,
                             double level = 0.95, std::uint64_t seed = 0);

struct OddsGaps {
  std::optional<double> d_tpr;
  std::optional<double> d_fpr;
  GroupCounts counts_a, counts_b;
};

OddsGaps equalized_odds(const std::vector<Prediction>& predictions,
                        const std::map<std::string, Label>& gold,
                        const std::map<std::string, ActorGroup>& groups,
                        Label positive_label);

struct SignificanceResult {
  std::optional<double> p_tpr;
  std::optional<double> p_fpr;
};

// Permutes group assignments within the relevant gold stratum (positives for
// TPR, negatives for FPR).
SignificanceResult fairness_significance(const std::vector<Prediction>& predictions,
                                         const std::map<std::string, Label>& gold,
                                         const std::map<std::string, ActorGroup>& groups,
                                         Label positive_label, std::int64_t n_perm = 1000,
                                         std::uint64_t seed = 0);

FairnessReport audit_fairness(const std::vector<Prediction>& predictions,
                              const std::map<std::string, Label>& gold,
                              const std::map<std::string, ActorGroup>& groups,
                              Label positive_label, std::int64_t n_boot = 1000,
                              std::int64_t n_perm = 1000, std::uint64_t seed = 0);

}  // namespace caudit::fairness
