#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caudit/stats.hpp"
#include "caudit/types.hpp"

namespace caudit::legitbias {

struct LegitCounts {
  std::int64_t n_fl = 0;  // gold V predicted B
  std::int64_t n_fi = 0;  // gold B predicted V
  std::int64_t n_v = 0;   // gold-V support
  std::int64_t n_b = 0;   // gold-B support
};

LegitCounts count_legitimization_errors(const std::vector<Prediction>& predictions,
                                        const std::map<std::string, Label>& gold);

struct LegitimizationReport {
  std::string model_id;
  int shots = 0;
  LegitCounts counts;
  stats::RateEstimate eps_fl;  // n_fl / n_v, Wilson CI
  stats::RateEstimate eps_fi;  // n_fi / n_b, Wilson CI
  double delta_lb_pp = 0.0;    // eps_fi - eps_fl, percentage points
  stats::TestResult p;         // two-proportion z on (n_fi, n_b) vs (n_fl, n_v)
  std::optional<std::uint64_t> corpus_digest;  // guards ICL comparability
};

LegitimizationReport legitimization_report(const LegitCounts& counts, double level = 0.95,
                                           const std::string& model_id = "", int shots = 0);

struct IclRow {
  std::string model_id;
  int shots = 0;
  double delta_lb_pp = 0.0;
  double p_value = 1.0;
  std::vector<std::string> flags;  // transitions from the previous shot count
};

struct IclComparison {
  std::vector<IclRow> rows;  // keyed (model, shots), shots ascending per model
};

struct IclThresholds {
  double creep_pp = 2.0;       // |delta_lb| growth flagged as creep
  double alpha = 0.05;         // significance boundary for transitions
  double neutral_pp = 0.5;     // |delta_lb| considered neutral for stabilization
};

// Flags per (model, consecutive shot pair): sign_change, creep (growth >=
// creep_pp with final p < alpha), stabilization (shrinking |delta_lb| ending
// neutral and non-significant), significance_gained / significance_lost.
IclComparison icl_comparison(const std::vector<LegitimizationReport>& reports,
                             const IclThresholds& thresholds = {});

}  // namespace caudit::legitbias
