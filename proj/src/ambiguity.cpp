#include "caudit/ambiguity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "caudit/stats.hpp"

namespace caudit::ambiguity {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains_any(const std::string& hay, const std::vector<std::string>& needles) {
  for (const auto& n : needles)
    if (!n.empty() && hay.find(lower(n)) != std::string::npos) return true;
  return false;
}

}  // namespace

std::string tier_str(Tier t) {
  switch (t) {
    case Tier::low: return "low";
    case Tier::medium: return "medium";
    case Tier::high: return "high";
  }
  return "";
}

TextLexicons default_text_lexicons() {
  TextLexicons lex;
  lex.unidentified_actor = {"unidentified", "unknown gunmen", "unknown armed group",
                            "unknown assailant"};
  lex.civilian_victim = {"civilian", "civilians", "villager", "villagers", "resident",
                         "residents", "non-combatant", "noncombatant", "bystander"};
  // Explicit organization markers only: a generic "armed group" cannot settle
  // the organizational criterion, so it stays out of this list.
  lex.organized_armed_group = {"military", "army", "soldiers", "police", "gendarme",
                               "rebel", "militia", "separatist", "insurgent",
                               "boko haram", "iswap", "troops", "security forces"};
  lex.targeting_language = {"targeted", "deliberately"};
  lex.kinetic_verbs = {"killed", "shot", "beat", "attacked", "burned", "ambushed",
                       "injured", "wounded"};
  return lex;
}

double text_ambiguity(const std::string& notes, const TextLexicons& lex) {
  std::string hay = lower(notes);
  double score = 0.0;
  if (contains_any(hay, lex.unidentified_actor)) score += 0.5;
  if (contains_any(hay, lex.civilian_victim) &&
      contains_any(hay, lex.organized_armed_group))
    score += 0.25;
  if (!contains_any(hay, lex.targeting_language) && contains_any(hay, lex.kinetic_verbs))
    score += 0.25;
  return std::clamp(score, 0.0, 1.0);
}

Tier tier_of(double total) {
  if (total >= 0.6) return Tier::high;
  if (total >= 0.3) return Tier::medium;
  return Tier::low;
}

AmbiguityScore score_event(const std::vector<Prediction>& predictions,
                           const std::string& notes, const TextLexicons& lexicons) {
  if (predictions.size() < 2)
    throw DataError("score_event: needs predictions from >= 2 models");

  AmbiguityScore s;
  std::array<std::int64_t, 6> votes{};
  double conf_sum = 0.0;
  for (const auto& p : predictions) {
    ++votes[static_cast<int>(p.label)];
    conf_sum += p.confidence;
  }
  s.label_entropy = stats::normalized_entropy(votes);

  double m = static_cast<double>(predictions.size());
  double mean_conf = conf_sum / m;
  s.confidence_uncertainty = std::clamp(1.0 - mean_conf, 0.0, 1.0);

  double var = 0.0;
  for (const auto& p : predictions) {
    double d = p.confidence - mean_conf;
    var += d * d;
  }
  double pop_std = std::sqrt(var / m);
  // 0.5 is the largest possible population std of values in [0,1].
  s.confidence_dispersion = std::min(1.0, pop_std / 0.5);

  s.text_ambiguity = text_ambiguity(notes, lexicons);
  s.total = 0.35 * s.label_entropy + 0.25 * s.confidence_uncertainty +
            0.20 * s.confidence_dispersion + 0.20 * s.text_ambiguity;
  s.tier = tier_of(s.total);
  return s;
}

GateResult gate_low_ambiguity(const std::map<std::string, AmbiguityScore>& scores) {
  GateResult g;
  g.tier_histogram = {{"low", 0}, {"medium", 0}, {"high", 0}};
  for (const auto& [event_id, score] : scores) {
    ++g.tier_histogram[tier_str(score.tier)];
    if (score.tier == Tier::low) g.low_ambiguity_ids.insert(event_id);
  }
  return g;
}

}  // namespace caudit::ambiguity
