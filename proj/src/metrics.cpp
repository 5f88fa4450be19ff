#include "caudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "caudit/stats.hpp"

namespace caudit::metrics {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int i = 0; i < 6; ++i) t += counts[i][i];
  return t;
}

std::array<std::int64_t, 6> ConfusionMatrix::row_sums() const {
  std::array<std::int64_t, 6> s{};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) s[i] += counts[i][j];
  return s;
}

std::array<std::int64_t, 6> ConfusionMatrix::col_sums() const {
  std::array<std::int64_t, 6> s{};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) s[j] += counts[i][j];
  return s;
}

ScoreReport score(const std::vector<Prediction>& predictions,
                  const std::map<std::string, Label>& gold) {
  if (predictions.empty()) throw DataError("score: empty input");
  ScoreReport r;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : predictions) {
    auto it = gold.find(p.event_id);
    if (it == gold.end()) throw DataError("score: no gold label for " + p.event_id);
    if (!seen.insert({p.event_id, p.model_id}).second)
      throw DataError("score: duplicate (event, model) pair " + p.event_id);
    int t = static_cast<int>(it->second);
    int y = static_cast<int>(p.label);
    ++r.confusion.counts[t][y];
  }
  r.total = r.confusion.total();
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.total);

  auto rows = r.confusion.row_sums();
  auto cols = r.confusion.col_sums();
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (int k = 0; k < 6; ++k) {
    ClassMetrics& m = r.per_class[k];
    std::int64_t tp = r.confusion.counts[k][k];
    m.support = rows[k];
    if (cols[k] == 0) {
      m.precision = 0.0;
      m.zero_division = true;
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(cols[k]);
    }
    if (rows[k] == 0) {
      m.recall = 0.0;
      m.zero_division = true;
    } else {
      m.recall = static_cast<double>(tp) / static_cast<double>(rows[k]);
    }
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    sp += m.precision;
    sr += m.recall;
    sf += m.f1;
  }
  r.macro_precision = sp / 6.0;
  r.macro_recall = sr / 6.0;
  r.macro_f1 = sf / 6.0;
  return r;
}

std::vector<DisagreementRow> disagreement_table(const std::vector<Prediction>& predictions) {
  std::map<std::string, std::vector<const Prediction*>> by_event;
  for (const auto& p : predictions) by_event[p.event_id].push_back(&p);

  std::vector<DisagreementRow> rows;
  for (const auto& [event_id, preds] : by_event) {
    if (preds.size() < 2)
      throw DataError("disagreement_table: fewer than 2 models for " + event_id);
    DisagreementRow row;
    row.event_id = event_id;
    std::array<int, 6> votes{};
    for (const auto* p : preds) {
      row.model_labels[p->model_id] = p->label;
      ++votes[static_cast<int>(p->label)];
      row.max_conf = std::max(row.max_conf, p->confidence);
    }
    int best = *std::max_element(votes.begin(), votes.end());
    int winners = 0;
    char best_code = 'Z' + 1;
    for (int k = 0; k < 6; ++k) {
      if (votes[k] != best) continue;
      ++winners;
      char code = kLabelCodes[k];
      if (code < best_code) {
        best_code = code;
        row.majority_label = kLabels[k];
      }
    }
    row.tie = winners > 1;  // plurality tie, resolved by lexicographic code
    row.d = static_cast<int>(preds.size()) - best;
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const DisagreementRow& a, const DisagreementRow& b) {
    if (a.d != b.d) return a.d > b.d;
    if (a.max_conf != b.max_conf) return a.max_conf > b.max_conf;
    return a.event_id < b.event_id;
  });
  return rows;
}

LengthAnalysis length_slice_analysis(const std::vector<Prediction>& predictions,
                                     const std::map<std::string, Label>& gold,
                                     const std::map<std::string, int>& notes_length,
                                     std::vector<double> boundaries) {
  if (predictions.empty()) throw DataError("length_slice_analysis: empty input");
  std::vector<double> lengths;
  std::vector<double> errors;
  for (const auto& p : predictions) {
    auto g = gold.find(p.event_id);
    auto l = notes_length.find(p.event_id);
    if (g == gold.end() || l == notes_length.end())
      throw DataError("length_slice_analysis: missing gold or length for " + p.event_id);
    lengths.push_back(static_cast<double>(l->second));
    errors.push_back(p.label == g->second ? 0.0 : 1.0);
  }

  LengthAnalysis out;
  double total_err = 0.0;
  for (double e : errors) total_err += e;
  out.overall_error = total_err / static_cast<double>(errors.size());

  if (boundaries.empty()) {
    // Quartile cuts of the observed lengths.
    std::vector<double> sorted = lengths;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.25, 0.5, 0.75})
      boundaries.push_back(stats::quantile_sorted(sorted, q));
    boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
  }
  std::sort(boundaries.begin(), boundaries.end());

  std::vector<LengthSlice> slices(boundaries.size() + 1);
  double lo = 0.0;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    slices[i].lower = lo;
    slices[i].upper = i < boundaries.size() ? boundaries[i]
                                            : std::numeric_limits<double>::infinity();
    lo = slices[i].upper;
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    std::size_t s = 0;
    while (s + 1 < slices.size() && lengths[i] >= slices[s].upper) ++s;
    ++slices[s].n;
    slices[s].errors += errors[i] > 0.5 ? 1 : 0;
  }
  for (auto& s : slices) {
    if (s.n > 0)
      s.delta_eps = static_cast<double>(s.errors) / static_cast<double>(s.n) -
                    out.overall_error;
  }
  out.slices = std::move(slices);

  std::set<double> distinct(lengths.begin(), lengths.end());
  if (distinct.size() >= 2) {
    auto sp = stats::spearman(lengths, errors);
    out.spearman_rho = sp.rho;
  }
  return out;
}

}  // namespace caudit::metrics
