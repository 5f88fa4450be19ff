#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "caudit/types.hpp"

namespace caudit::ambiguity {

enum class Tier { low, medium, high };

std::string tier_str(Tier t);

struct AmbiguityScore {
  double label_entropy = 0.0;
  double confidence_uncertainty = 0.0;
  double confidence_dispersion = 0.0;
  double text_ambiguity = 0.0;
  double total = 0.0;  // 0.35*entropy + 0.25*uncertainty + 0.20*dispersion + 0.20*text
  Tier tier = Tier::low;
};

// Lexicons backing the text heuristic; shipped defaults match
// data/ambiguity_lexicons.json. The indicator weights (0.5 unidentified
// actor, 0.25 civilian/armed-group co-occurrence, 0.25 untargeted kinetic
// language) are this toolkit's construction, not an upstream standard.
struct TextLexicons {
  std::vector<std::string> unidentified_actor;
  std::vector<std::string> civilian_victim;
  std::vector<std::string> organized_armed_group;
  std::vector<std::string> targeting_language;
  std::vector<std::string> kinetic_verbs;
};

TextLexicons default_text_lexicons();

double text_ambiguity(const std::string& notes,
                      const TextLexicons& lexicons = default_text_lexicons());

// predictions: one per model for a single event (M >= 2).
AmbiguityScore score_event(const std::vector<Prediction>& predictions,
                           const std::string& notes,
                           const TextLexicons& lexicons = default_text_lexicons());

Tier tier_of(double total);

struct GateResult {
  std::set<std::string> low_ambiguity_ids;  // total < 0.3
  std::map<std::string, std::int64_t> tier_histogram;
};

GateResult gate_low_ambiguity(const std::map<std::string, AmbiguityScore>& scores);

}  // namespace caudit::ambiguity
