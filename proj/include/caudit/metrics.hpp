#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caudit/types.hpp"

namespace caudit::metrics {

struct ConfusionMatrix {
  // rows = true label, columns = predicted, in V,B,E,P,R,S order.
  std::array<std::array<std::int64_t, 6>, 6> counts{};
  std::int64_t total() const;
  std::int64_t trace() const;
  std::array<std::int64_t, 6> row_sums() const;
  std::array<std::int64_t, 6> col_sums() const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  bool zero_division = false;  // no predicted (or gold) positives for the class
};

struct ScoreReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 6> per_class{};
  ConfusionMatrix confusion;
  std::int64_t total = 0;
};

ScoreReport score(const std::vector<Prediction>& predictions,
                  const std::map<std::string, Label>& gold);

struct DisagreementRow {
  std::string event_id;
  std::map<std::string, Label> model_labels;
  Label majority_label = Label::V;
  int d = 0;  // models off the majority
  double max_conf = 0.0;
  bool tie = false;  // plurality tie broken by lexicographic label code
};

// Sorted by D descending, then max_conf descending, event_id as final tiebreak.
std::vector<DisagreementRow> disagreement_table(const std::vector<Prediction>& predictions);

struct LengthSlice {
  double lower = 0.0;  // inclusive
  double upper = 0.0;  // exclusive (last slice unbounded)
  std::int64_t n = 0;
  std::int64_t errors = 0;
  std::optional<double> delta_eps;  // slice error rate minus overall, null if empty
};

struct LengthAnalysis {
  std::vector<LengthSlice> slices;
  double overall_error = 0.0;
  std::optional<double> spearman_rho;  // length vs error indicator, average ranks
};

// boundaries are interior cut points; empty -> corpus length quartiles.
LengthAnalysis length_slice_analysis(const std::vector<Prediction>& predictions,
                                     const std::map<std::string, Label>& gold,
                                     const std::map<std::string, int>& notes_length,
                                     std::vector<double> boundaries = {});

}  // namespace caudit::metrics
