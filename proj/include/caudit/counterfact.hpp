#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caudit/modelgate.hpp"
#include "caudit/stats.hpp"
#include "caudit/types.hpp"

namespace caudit::counterfact {

enum class Family : int {
  negation = 0,
  legitimation = 1,
  delegitimation = 2,
  actor_substitution = 3,
  provenance = 4,
  intensity = 5,
  decontextualization = 6,
  action_substitution = 7,
  neutral_control = 8,
};

inline constexpr std::array<Family, 8> kTreatmentFamilies = {
    Family::negation,          Family::legitimation,
    Family::delegitimation,    Family::actor_substitution,
    Family::provenance,        Family::intensity,
    Family::decontextualization, Family::action_substitution};

std::string family_str(Family f);
std::optional<Family> parse_family(std::string_view s);

enum class ControlFamily : int {
  reporting_verb = 0,
  day_of_week = 1,
  temporal_connective = 2,
  cardinal_numeral = 3,
};

std::string control_family_str(ControlFamily f);

enum class PerturbMode : int {
  prefix = 0,
  suffix = 1,
  insert_before_verb = 2,
  substring_replace = 3,
};

struct PerturbationSpec {
  std::string id;
  Family family = Family::negation;
  PerturbMode mode = PerturbMode::substring_replace;
  // Substitutions fire only when the trigger is present (first whole-word,
  // case-insensitive occurrence). The reserved trigger "@location" matches
  // "in/at/near <Proper Name>" runs for decontextualization.
  std::string trigger;
  std::string payload;
  std::string display;  // word/phrase label used in the sensitivity tables
  std::optional<ControlFamily> control_family;
};

// Treatment lexicon plus the four neutral-control swap families, shipped as
// data (data/perturbation_specs.json mirrors this set).
std::vector<PerturbationSpec> default_perturbation_specs();
std::vector<PerturbationSpec> load_perturbation_specs(const std::string& path);

struct Applied {
  std::string text;
  bool lowercased_first = false;  // prefix joins lowercase the original start
};

// Deterministic; std::nullopt means not applicable (absent trigger, or the
// payload is already present so the same edit will not fire twice).
std::optional<Applied> apply_perturbation(const std::string& notes,
                                          const PerturbationSpec& spec);

struct PerturbationOutcome {
  std::string event_id;
  std::string spec_id;
  Family family = Family::negation;
  std::string display;
  std::string model_id;
  Label original_label = Label::V;
  Label perturbed_label = Label::V;
  bool flipped = false;
  double confidence_delta = 0.0;  // perturbed - original
  std::optional<std::vector<std::string>> original_rationale;
  std::optional<std::vector<std::string>> perturbed_rationale;
};

struct ModelUnderTest {
  modelgate::EndpointConfig endpoint;
  modelgate::StrategyConfig strategy;
};

struct CounterfactualRun {
  std::vector<PerturbationOutcome> outcomes;          // treatments
  std::vector<PerturbationOutcome> neutral_outcomes;  // neutral controls
  std::int64_t excluded_failures = 0;  // classification failures, not in rates
  std::vector<std::pair<std::string, std::string>> review_samples;  // (orig, pert)
};

// events must be pre-gated to the low-ambiguity tier. At most one neutral
// substitution fires per control family per event.
CounterfactualRun run_counterfactuals(const std::vector<EventRecord>& events,
                                      const std::vector<PerturbationSpec>& specs,
                                      const std::vector<ModelUnderTest>& models,
                                      int parallelism = 4,
                                      std::int64_t review_sample_n = 0,
                                      std::uint64_t review_seed = 0);

struct WordLevelRow {
  std::string display;
  Family family = Family::negation;
  std::int64_t n = 0;
  std::int64_t flips = 0;
  double flip_rate = 0.0;
  stats::RateEstimate ci;       // Clopper-Pearson
  double delta_phi_pp = 0.0;    // flip% - baseline flip%, percentage points
  double h = 0.0;               // Cohen's h vs baseline
  stats::TestResult p;          // chi-square or Fisher vs neutral baseline
  std::map<std::string, std::int64_t> per_model_n;
};

struct WordLevelTable {
  std::vector<WordLevelRow> rows;  // flip rate descending
  std::int64_t baseline_n = 0;
  std::int64_t baseline_flips = 0;
  double baseline_rate = 0.0;
  stats::RateEstimate baseline_ci;
};

WordLevelTable word_level_table(const std::vector<PerturbationOutcome>& outcomes,
                                const std::vector<PerturbationOutcome>& neutral_outcomes);

struct VulnerabilityRow {
  std::string model_id;
  Family family = Family::negation;
  std::int64_t n = 0;
  std::int64_t flips = 0;
  double flip_rate = 0.0;
  stats::RateEstimate ci;
  double mean_confidence_shift = 0.0;  // a different quantity from delta_phi_pp
  double h = 0.0;                      // vs the model's own neutral rate
  stats::TestResult p;                 // Fisher exact vs own neutral flips
};

struct VulnerabilityMatrix {
  std::vector<VulnerabilityRow> rows;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> neutral_by_model;  // (flips, n)
};

VulnerabilityMatrix vulnerability_matrix(const std::vector<PerturbationOutcome>& outcomes,
                                         const std::vector<PerturbationOutcome>& neutral_outcomes);

// Per-event flip-rate vector over the eight treatment families.
std::map<std::string, std::vector<double>> flip_profiles(
    const std::vector<PerturbationOutcome>& outcomes);

struct ClusterResult {
  std::vector<std::string> event_ids;
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  int k = 1;
  double silhouette = 0.0;
  bool degenerate = false;  // all profiles identical
};

// Centroid clustering with k chosen by silhouette over [2, 8]; deterministic
// given the seed; duplicate profiles always land in the same cluster.
ClusterResult sensitivity_clusters(const std::map<std::string, std::vector<double>>& profiles,
                                   std::uint64_t seed);

}  // namespace caudit::counterfact
