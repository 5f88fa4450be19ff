#include "caudit/legitbias.hpp"

#include <algorithm>
#include <cmath>

namespace caudit::legitbias {

LegitCounts count_legitimization_errors(const std::vector<Prediction>& predictions,
                                        const std::map<std::string, Label>& gold) {
  LegitCounts c;
  for (const auto& p : predictions) {
    auto it = gold.find(p.event_id);
    if (it == gold.end())
      throw DataError("count_legitimization_errors: no gold label for " + p.event_id);
    if (it->second == Label::V) {
      ++c.n_v;
      if (p.label == Label::B) ++c.n_fl;
    } else if (it->second == Label::B) {
      ++c.n_b;
      if (p.label == Label::V) ++c.n_fi;
    }
  }
  return c;
}

LegitimizationReport legitimization_report(const LegitCounts& counts, double level,
                                           const std::string& model_id, int shots) {
  if (counts.n_v < 1 || counts.n_b < 1)
    throw DataError("legitimization_report: zero support in V or B");
  if (counts.n_fl > counts.n_v || counts.n_fi > counts.n_b)
    throw DataError("legitimization_report: error count exceeds support");
  LegitimizationReport r;
  r.model_id = model_id;
  r.shots = shots;
  r.counts = counts;
  r.eps_fl = stats::wilson_interval(counts.n_fl, counts.n_v, level);
  r.eps_fi = stats::wilson_interval(counts.n_fi, counts.n_b, level);
  r.delta_lb_pp = (r.eps_fi.rate - r.eps_fl.rate) * 100.0;
  r.p = stats::two_prop_z(counts.n_fi, counts.n_b, counts.n_fl, counts.n_v);
  return r;
}

IclComparison icl_comparison(const std::vector<LegitimizationReport>& reports,
                             const IclThresholds& th) {
  std::map<std::string, std::vector<const LegitimizationReport*>> by_model;
  std::optional<std::uint64_t> digest;
  for (const auto& r : reports) {
    if (r.corpus_digest) {
      if (digest && *digest != *r.corpus_digest)
        throw DataError("icl_comparison: reports computed on different corpora");
      digest = r.corpus_digest;
    }
    by_model[r.model_id].push_back(&r);
  }

  IclComparison out;
  for (auto& [model, rows] : by_model) {
    std::sort(rows.begin(), rows.end(),
              [](const LegitimizationReport* a, const LegitimizationReport* b) {
                return a->shots < b->shots;
              });
    const LegitimizationReport* prev = nullptr;
    for (const auto* r : rows) {
      IclRow row;
      row.model_id = model;
      row.shots = r->shots;
      row.delta_lb_pp = r->delta_lb_pp;
      row.p_value = r->p.p_value;
      if (prev) {
        double before = prev->delta_lb_pp;
        double after = r->delta_lb_pp;
        if (before != 0.0 && after != 0.0 && std::signbit(before) != std::signbit(after))
          row.flags.push_back("sign_change");
        double growth = std::fabs(after) - std::fabs(before);
        if (growth >= th.creep_pp && r->p.p_value < th.alpha)
          row.flags.push_back(after >= 0.0 ? "illegitimation_creep" : "legitimation_creep");
        if (growth < 0.0 && std::fabs(after) <= th.neutral_pp && r->p.p_value >= th.alpha)
          row.flags.push_back("stabilization");
        bool was_sig = prev->p.p_value < th.alpha;
        bool is_sig = r->p.p_value < th.alpha;
        if (!was_sig && is_sig) row.flags.push_back("significance_gained");
        if (was_sig && !is_sig) row.flags.push_back("significance_lost");
      }
      out.rows.push_back(std::move(row));
      prev = r;
    }
  }
  return out;
}

}  // namespace caudit::legitbias
