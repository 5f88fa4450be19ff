#include "caudit/types.hpp"

#include <algorithm>
#include <cctype>

namespace caudit {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::optional<Label> parse_label(std::string_view s) {
  if (s.size() == 1) {
    for (std::size_t i = 0; i < kLabelCodes.size(); ++i) {
      if (std::toupper(static_cast<unsigned char>(s[0])) == kLabelCodes[i])
        return kLabels[i];
    }
    return std::nullopt;
  }
  std::string l = lower(s);
  if (l == "violence against civilians") return Label::V;
  if (l == "battles") return Label::B;
  if (l == "explosions/remote violence" || l == "explosions" ||
      l == "remote violence")
    return Label::E;
  if (l == "protests") return Label::P;
  if (l == "riots") return Label::R;
  if (l == "strategic developments") return Label::S;
  return std::nullopt;
}

std::string label_name(Label l) {
  switch (l) {
    case Label::V: return "Violence against civilians";
    case Label::B: return "Battles";
    case Label::E: return "Explosions/Remote violence";
    case Label::P: return "Protests";
    case Label::R: return "Riots";
    case Label::S: return "Strategic developments";
  }
  return "";
}

std::string actor_group_str(ActorGroup g) {
  switch (g) {
    case ActorGroup::State: return "State";
    case ActorGroup::NonState: return "NonState";
    case ActorGroup::Other: return "Other";
  }
  return "";
}

std::optional<ActorGroup> parse_actor_group(std::string_view s) {
  std::string l = lower(s);
  if (l == "state") return ActorGroup::State;
  if (l == "nonstate" || l == "non-state" || l == "non_state") return ActorGroup::NonState;
  if (l == "other") return ActorGroup::Other;
  return std::nullopt;
}

std::string strategy_str(Strategy s) {
  switch (s) {
    case Strategy::zero_shot: return "zero_shot";
    case Strategy::few_shot: return "few_shot";
    case Strategy::explainable: return "explainable";
  }
  return "";
}

std::optional<Strategy> parse_strategy(std::string_view s) {
  std::string l = lower(s);
  if (l == "zero_shot" || l == "zero-shot" || l == "zeroshot") return Strategy::zero_shot;
  if (l == "few_shot" || l == "few-shot" || l == "fewshot") return Strategy::few_shot;
  if (l == "explainable") return Strategy::explainable;
  return std::nullopt;
}

}  // namespace caudit
