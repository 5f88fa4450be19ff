#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "caudit/types.hpp"

namespace caudit::calibrate {

// Step function from pool-adjacent-violators. Applying to a new confidence
// takes the step value at the largest breakpoint <= x (right-continuous),
// clamped at both ends.
struct IsotonicMap {
  std::vector<std::pair<double, double>> steps;  // (input confidence, fitted value)
  double apply(double confidence) const;
};

// pairs: (confidence, correctness in {0,1}); ties in confidence are pooled
// before fitting. Least-squares optimal among nondecreasing fits.
IsotonicMap fit_isotonic(std::vector<std::pair<double, double>> pairs);

struct TemperatureMap {
  double temperature = 1.0;
  LabelDist apply(const LabelDist& dist) const;
};

struct TemperatureFit {
  TemperatureMap map;
  double nll = 0.0;
  bool degenerate_at_bound = false;  // optimum pinned at a search bound
  std::int64_t floored_zeros = 0;    // zero probabilities floored at 1e-9
};

// Minimizes NLL of the gold labels under softmax(log(dist)/T) by bounded
// one-dimensional search on T in [0.05, 20] to 1e-4.
TemperatureFit fit_temperature(const std::vector<LabelDist>& distributions,
                               const std::vector<Label>& gold);

double brier(const std::vector<double>& confidences, const std::vector<int>& outcomes);

struct SelectivePoint {
  double tau = 0.0;
  double coverage = 0.0;
  std::optional<double> accuracy;  // null when nothing is retained
};

// taus must be ascending; coverage is the fraction with confidence >= tau.
std::vector<SelectivePoint> selective_curve(const std::vector<double>& confidences,
                                            const std::vector<int>& correct,
                                            const std::vector<double>& taus);

}  // namespace caudit::calibrate
