#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace caudit {

// The six ACLED event codes, in the canonical table order.
enum class Label : int { V = 0, B = 1, E = 2, P = 3, R = 4, S = 5 };

inline constexpr std::array<Label, 6> kLabels = {Label::V, Label::B, Label::E,
                                                 Label::P, Label::R, Label::S};
inline constexpr std::array<char, 6> kLabelCodes = {'V', 'B', 'E', 'P', 'R', 'S'};

inline char label_code(Label l) { return kLabelCodes[static_cast<int>(l)]; }

inline std::string label_str(Label l) { return std::string(1, label_code(l)); }

std::optional<Label> parse_label(std::string_view s);

// Long-form category names as they appear in ACLED exports and prompts.
std::string label_name(Label l);

enum class ActorGroup : int { State = 0, NonState = 1, Other = 2 };

std::string actor_group_str(ActorGroup g);
std::optional<ActorGroup> parse_actor_group(std::string_view s);

struct EventRecord {
  std::string event_id;
  std::string country;
  std::optional<std::string> event_date;  // ISO-8601; unparseable dates kept null
  std::string notes;
  Label true_label = Label::V;
  std::string actor_raw;
  ActorGroup actor_group = ActorGroup::Other;
  int notes_length = 0;  // character count of notes
};

enum class Strategy : int { zero_shot = 0, few_shot = 1, explainable = 2 };

std::string strategy_str(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);

// Six-way label distribution indexed by Label order V,B,E,P,R,S.
using LabelDist = std::array<double, 6>;

struct Prediction {
  std::string event_id;
  std::string model_id;
  Strategy strategy = Strategy::zero_shot;
  int shots = 0;
  Label label = Label::V;
  double confidence = 0.0;
  LabelDist logits{};  // values in [0,1], sum 1 within 0.01 after acceptance
  std::optional<std::vector<std::string>> rationale;  // exactly 3 when present
  std::string raw_response;
  // Digest of the prompt that produced this verdict; lets a replay endpoint
  // distinguish perturbed variants of the same event.
  std::uint64_t request_digest = 0;
};

// Error taxonomy mirrored by CLI exit codes: config=2, endpoint=3, data=4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EndpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace caudit
