#include "caudit/errortrace.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace caudit::errortrace {

namespace {

std::string normalize(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool last_space = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!last_space) out.push_back(' ');
      last_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      last_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStop = {
      "a",    "an",   "the",  "and",  "or",   "of",   "to",   "in",  "on",
      "at",   "by",   "for",  "that", "this", "with", "was",  "were", "is",
      "are",  "it",   "they", "he",   "she",  "did",  "not",  "no",  "according"};
  return kStop;
}

std::vector<std::string> content_words(const std::string& s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      if (!stopwords().count(cur)) words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty() && !stopwords().count(cur)) words.push_back(cur);
  return words;
}

std::string join_rationale(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& item : items) {
    s += item;
    s += '\n';
  }
  return s;
}

bool rationales_differ(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) return true;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (normalize(a[i]) != normalize(b[i])) return true;
  return false;
}

bool cites_payload(const std::vector<std::string>& rationale, const std::string& payload,
                   const std::string& trigger, bool exact_phrase) {
  std::string joined = normalize(join_rationale(rationale));
  if (exact_phrase) {
    std::string p = normalize(payload);
    if (!p.empty() && joined.find(p) != std::string::npos) return true;
    std::string t = normalize(trigger);
    return !t.empty() && joined.find(t) != std::string::npos;
  }
  auto match_words = [&](const std::string& phrase) {
    auto words = content_words(phrase);
    if (words.empty()) return false;
    for (const auto& w : words)
      if (joined.find(w) == std::string::npos) return false;
    return true;
  };
  // Citing either the inserted text or the source pattern it replaced counts.
  return match_words(payload) || (!trigger.empty() && trigger != "@location" &&
                                  match_words(trigger));
}

}  // namespace

RfcAnalysis rfc_analyze(const std::vector<counterfact::PerturbationOutcome>& flipped_treatments,
                        const std::vector<counterfact::PerturbationOutcome>& flipped_neutrals,
                        const std::vector<counterfact::PerturbationSpec>& specs,
                        const ConcordanceOptions& options) {
  std::map<std::string, const counterfact::PerturbationSpec*> spec_by_id;
  for (const auto& s : specs) spec_by_id[s.id] = &s;

  RfcAnalysis analysis;
  auto process = [&](const counterfact::PerturbationOutcome& o, FlipSource source) {
    if (!o.flipped) return;
    RfcSummary& summary = analysis.by_model[o.model_id];
    summary.model_id = o.model_id;
    if (source == FlipSource::baseline) ++summary.n_baseline;
    if (!o.original_rationale || !o.perturbed_rationale) {
      ++summary.excluded_missing_rationale;
      return;
    }
    RfcRecord rec;
    rec.event_id = o.event_id;
    rec.spec_id = o.spec_id;
    rec.model_id = o.model_id;
    rec.flip_source = source;
    rec.rationale_changed = rationales_differ(*o.original_rationale, *o.perturbed_rationale);
    std::string payload = o.display, trigger;
    if (auto it = spec_by_id.find(o.spec_id); it != spec_by_id.end()) {
      payload = it->second->payload;
      trigger = it->second->trigger;
    }
    rec.concordant =
        cites_payload(*o.perturbed_rationale, payload, trigger, options.exact_phrase);
    ++summary.n_flips;
    summary.n_changed += rec.rationale_changed ? 1 : 0;
    summary.n_concordant += rec.concordant ? 1 : 0;
    analysis.records.push_back(std::move(rec));
  };

  for (const auto& o : flipped_treatments) process(o, FlipSource::treatment);
  for (const auto& o : flipped_neutrals) process(o, FlipSource::baseline);

  for (auto& [model, summary] : analysis.by_model) {
    if (summary.n_flips > 0) {
      summary.eps_delta_rat_pct =
          100.0 * static_cast<double>(summary.n_changed) / static_cast<double>(summary.n_flips);
      summary.eps_rfc_pct =
          100.0 * static_cast<double>(summary.n_concordant) / static_cast<double>(summary.n_flips);
    }
  }
  return analysis;
}

std::optional<bool> confabulation_flag(const RfcSummary& summary,
                                       const ConfabulationThresholds& thresholds) {
  if (summary.n_flips < thresholds.min_flips) return std::nullopt;
  return summary.eps_delta_rat_pct >= thresholds.min_delta_rat_pct &&
         summary.eps_rfc_pct <= thresholds.max_rfc_pct;
}

AttributionSummary summarize_attributions(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw DataError("cannot open attribution file: " + jsonl_path);
  AttributionSummary s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("top_token")) continue;
    ++s.n_events;
    std::string token = j["top_token"].get<std::string>();
    bool punct = !token.empty() &&
                 std::all_of(token.begin(), token.end(), [](unsigned char c) {
                   return std::ispunct(c);
                 });
    std::string cls = j.value("token_class", "");
    if (punct || cls == "punctuation")
      ++s.punctuation_anchors;
    else if (cls == "verb")
      ++s.verb_anchors;
    else
      ++s.other_anchors;
  }
  return s;
}

}  // namespace caudit::errortrace
