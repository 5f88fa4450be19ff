#include "caudit/counterfact.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "caudit/rng.hpp"

namespace caudit::counterfact {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'';
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// First case-insensitive whole-word occurrence; npos if absent.
std::size_t find_whole_word(const std::string& text, const std::string& word) {
  if (word.empty()) return std::string::npos;
  std::string hay = lower(text), needle = lower(word);
  std::size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || !is_word_char(hay[pos - 1]);
    std::size_t end = pos + needle.size();
    bool right_ok = end >= hay.size() || !is_word_char(hay[end]);
    if (left_ok && right_ok) return pos;
    ++pos;
  }
  return std::string::npos;
}

bool contains_ci(const std::string& text, const std::string& sub) {
  return lower(text).find(lower(sub)) != std::string::npos;
}

// Sentence starters safe to lowercase after a prefix insertion. Proper nouns
// stay capitalized, so anything not listed keeps its case.
const char* kLowercasable[] = {
    "a",        "an",        "the",       "on",       "in",        "at",
    "during",   "after",     "before",    "about",    "around",    "several",
    "one",      "two",       "three",     "four",     "five",      "armed",
    "unidentified", "suspected", "unknown", "gunmen",  "militants", "soldiers",
    "residents", "military",  "police",    "government", "security", "protesters",
    "youths",   "civilians",  "authorities", "villagers", "members", "local",
    "state",    "troops",     "separatists", "separatist", "insurgents", "rebels",
    "it",       "they",       "he",         "she",       "an",       "as"};

bool lowercasable_first_word(const std::string& text) {
  std::size_t end = 0;
  while (end < text.size() && is_word_char(text[end])) ++end;
  if (end == 0) return false;
  std::string first = lower(text.substr(0, end));
  for (const char* w : kLowercasable)
    if (first == w) return true;
  return false;
}

const char* kIntensityVerbs[] = {"killed", "shot", "beat", "attacked", "burned"};

const char* kWeekdays[] = {"monday", "tuesday",  "wednesday", "thursday",
                           "friday", "saturday", "sunday"};
const char* kMonths[] = {"january", "february", "march",     "april",   "may",
                         "june",    "july",     "august",    "september",
                         "october", "november", "december"};

bool is_calendar_word(const std::string& w) {
  std::string l = lower(w);
  for (const char* d : kWeekdays)
    if (l == d) return true;
  for (const char* m : kMonths)
    if (l == m) return true;
  return false;
}

// "in/at/near <Proper Name [Name ...]> [(...)]" -> span of the name part.
std::optional<std::pair<std::size_t, std::size_t>> find_location(const std::string& text) {
  const char* preps[] = {" in ", " at ", " near "};
  std::size_t best = std::string::npos, best_end = 0;
  for (const char* prep : preps) {
    std::size_t pos = 0;
    std::string p(prep);
    while ((pos = text.find(p, pos)) != std::string::npos) {
      std::size_t start = pos + p.size();
      if (start >= text.size() || !std::isupper(static_cast<unsigned char>(text[start]))) {
        ++pos;
        continue;
      }
      // Consume capitalized-word run.
      std::size_t end = start;
      std::string first_word;
      while (end < text.size()) {
        std::size_t we = end;
        while (we < text.size() && (is_word_char(text[we]) || text[we] == '-')) ++we;
        std::string word = text.substr(end, we - end);
        if (word.empty() || !std::isupper(static_cast<unsigned char>(word[0]))) break;
        if (first_word.empty()) first_word = word;
        end = we;
        if (we < text.size() && text[we] == ' ' && we + 1 < text.size() &&
            std::isupper(static_cast<unsigned char>(text[we + 1])))
          end = we + 1;
        else
          break;
      }
      if (end == start || is_calendar_word(first_word)) {
        ++pos;
        continue;
      }
      // Swallow a trailing parenthetical: "Bamunka (Ngo-Ketunjia)".
      std::size_t after = end;
      if (after < text.size() && text[after] == ' ' && after + 1 < text.size() &&
          text[after + 1] == '(') {
        std::size_t close = text.find(')', after + 1);
        if (close != std::string::npos) after = close + 1;
      }
      if (best == std::string::npos || start < best) {
        best = start;
        best_end = after;
      }
      break;  // earliest occurrence for this preposition
    }
  }
  if (best == std::string::npos) return std::nullopt;
  return std::make_pair(best, best_end);
}

std::string replace_span(const std::string& text, std::size_t pos, std::size_t len,
                         const std::string& payload) {
  std::string out = text.substr(0, pos);
  std::string p = payload;
  if (pos < text.size() && std::isupper(static_cast<unsigned char>(text[pos])) &&
      !p.empty() && std::islower(static_cast<unsigned char>(p[0])))
    p[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(p[0])));
  out += p;
  out += text.substr(pos + len);
  return out;
}

}  // namespace

std::string family_str(Family f) {
  switch (f) {
    case Family::negation: return "negation";
    case Family::legitimation: return "legitimation";
    case Family::delegitimation: return "delegitimation";
    case Family::actor_substitution: return "actor_substitution";
    case Family::provenance: return "provenance";
    case Family::intensity: return "intensity";
    case Family::decontextualization: return "decontextualization";
    case Family::action_substitution: return "action_substitution";
    case Family::neutral_control: return "neutral_control";
  }
  return "";
}

std::optional<Family> parse_family(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Family::neutral_control); ++i) {
    Family f = static_cast<Family>(i);
    if (family_str(f) == s) return f;
  }
  return std::nullopt;
}

std::string control_family_str(ControlFamily f) {
  switch (f) {
    case ControlFamily::reporting_verb: return "reporting_verb";
    case ControlFamily::day_of_week: return "day_of_week";
    case ControlFamily::temporal_connective: return "temporal_connective";
    case ControlFamily::cardinal_numeral: return "cardinal_numeral";
  }
  return "";
}

std::optional<Applied> apply_perturbation(const std::string& notes,
                                          const PerturbationSpec& spec) {
  switch (spec.mode) {
    case PerturbMode::prefix: {
      if (contains_ci(notes, spec.payload)) return std::nullopt;  // never fire twice
      Applied a;
      std::string body = notes;
      if (lowercasable_first_word(body) && !body.empty() &&
          std::isupper(static_cast<unsigned char>(body[0]))) {
        body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
        a.lowercased_first = true;
      }
      a.text = spec.payload + " " + body;
      return a;
    }
    case PerturbMode::suffix: {
      if (contains_ci(notes, spec.payload)) return std::nullopt;
      Applied a;
      if (!notes.empty() && notes.back() == '.')
        a.text = notes.substr(0, notes.size() - 1) + spec.payload + ".";
      else
        a.text = notes + spec.payload;
      return a;
    }
    case PerturbMode::insert_before_verb: {
      if (find_whole_word(notes, spec.payload) != std::string::npos) return std::nullopt;
      for (const char* verb : kIntensityVerbs) {
        std::size_t pos = find_whole_word(notes, verb);
        if (pos == std::string::npos) continue;
        Applied a;
        a.text = notes.substr(0, pos) + spec.payload + " " + notes.substr(pos);
        return a;
      }
      return std::nullopt;
    }
    case PerturbMode::substring_replace: {
      if (spec.trigger == "@location") {
        auto span = find_location(notes);
        if (!span) return std::nullopt;
        if (notes.compare(span->first, span->second - span->first, spec.payload) == 0)
          return std::nullopt;
        Applied a;
        a.text = notes.substr(0, span->first) + spec.payload + notes.substr(span->second);
        return a;
      }
      if (spec.trigger.empty()) throw ConfigError("substitution spec without trigger");
      std::size_t pos = find_whole_word(notes, spec.trigger);
      if (pos == std::string::npos) return std::nullopt;
      Applied a;
      a.text = replace_span(notes, pos, spec.trigger.size(), spec.payload);
      if (a.text == notes) return std::nullopt;  // identity substitution
      return a;
    }
  }
  return std::nullopt;
}

std::vector<PerturbationSpec> default_perturbation_specs() {
  using F = Family;
  using M = PerturbMode;
  std::vector<PerturbationSpec> specs;
  auto add = [&](std::string id, F f, M m, std::string trigger, std::string payload,
                 std::string display, std::optional<ControlFamily> cf = std::nullopt) {
    specs.push_back({std::move(id), f, m, std::move(trigger), std::move(payload),
                     std::move(display), cf});
  };

  add("neg_killed", F::negation, M::substring_replace, "killed", "did not kill", "killed");
  add("neg_beat", F::negation, M::substring_replace, "beat", "did not beat", "beat");
  add("neg_arrested", F::negation, M::substring_replace, "arrested", "did not arrest",
      "arrested");
  add("neg_burned", F::negation, M::substring_replace, "burned", "did not burn", "burned");

  add("leg_self_defense", F::legitimation, M::suffix, "", " in self-defense",
      "in self-defense");
  add("leg_restore_order", F::legitimation, M::suffix, "", " to restore order",
      "to restore order");

  add("deleg_unprovoked", F::delegitimation, M::prefix, "", "Unprovoked,", "unprovoked");
  add("deleg_excessive_force", F::delegitimation, M::suffix, "", ", using excessive force",
      "using excessive force");
  add("deleg_human_rights", F::delegitimation, M::suffix, "", ", violating human rights",
      "violating human rights");
  add("deleg_no_justification", F::delegitimation, M::suffix, "", ", without justification",
      "without justification");

  add("actor_mil_secforces", F::actor_substitution, M::substring_replace, "military",
      "security forces", "security forces");
  add("actor_mil_govtroops", F::actor_substitution, M::substring_replace, "military",
      "government troops", "government troops");
  add("actor_police_auth", F::actor_substitution, M::substring_replace, "police",
      "authorities", "authorities");
  add("actor_police_uag", F::actor_substitution, M::substring_replace, "police",
      "unidentified armed group", "unidentified armed group");
  add("actor_soldiers_milpers", F::actor_substitution, M::substring_replace, "soldiers",
      "military personnel", "military personnel");
  add("actor_army_armedforces", F::actor_substitution, M::substring_replace, "army",
      "armed forces", "armed forces");
  add("actor_troops_secpers", F::actor_substitution, M::substring_replace, "troops",
      "security personnel", "security personnel");

  add("prov_state_media", F::provenance, M::prefix, "", "According to state media,",
      "According to state media,");
  add("prov_gov_officials", F::provenance, M::prefix, "", "Government officials stated that",
      "Government officials stated that");
  add("prov_hr_orgs", F::provenance, M::prefix, "",
      "Human rights organizations documented that",
      "Human rights organizations documented that");
  add("prov_state_run", F::provenance, M::prefix, "", "State-run media reported that",
      "State-run media reported that");

  add("int_brutally", F::intensity, M::insert_before_verb, "", "brutally", "brutally");
  add("int_violently", F::intensity, M::insert_before_verb, "", "violently", "violently");

  add("decon_location", F::decontextualization, M::substring_replace, "@location",
      "Location X", "Location X");

  add("act_arrested_detained", F::action_substitution, M::substring_replace, "arrested",
      "detained", "detained");
  add("act_clashed_engaged", F::action_substitution, M::substring_replace, "clashed with",
      "engaged", "engaged");
  add("act_clashed_fought", F::action_substitution, M::substring_replace, "clashed with",
      "fought", "fought");
  add("act_clashed_confronted", F::action_substitution, M::substring_replace, "clashed with",
      "confronted", "confronted");
  add("act_killed_murdered", F::action_substitution, M::substring_replace, "killed",
      "murdered", "murdered");
  add("act_killed_executed", F::action_substitution, M::substring_replace, "killed",
      "executed", "executed");
  add("act_attacked_struck", F::action_substitution, M::substring_replace, "attacked",
      "struck", "struck");

  using C = ControlFamily;
  add("nc_said_stated", F::neutral_control, M::substring_replace, "said", "stated",
      "said->stated", C::reporting_verb);
  add("nc_reported_noted", F::neutral_control, M::substring_replace, "reported", "noted",
      "reported->noted", C::reporting_verb);
  const char* days[] = {"Monday", "Tuesday", "Wednesday", "Thursday",
                        "Friday", "Saturday", "Sunday"};
  for (int i = 0; i < 7; ++i) {
    std::string from = days[i], to = days[(i + 1) % 7];
    add("nc_day_" + lower(from), F::neutral_control, M::substring_replace, from, to,
        from + "->" + to, C::day_of_week);
  }
  add("nc_later_afterwards", F::neutral_control, M::substring_replace, "later",
      "afterwards", "later->afterwards", C::temporal_connective);
  add("nc_then_subsequently", F::neutral_control, M::substring_replace, "then",
      "subsequently", "then->subsequently", C::temporal_connective);
  add("nc_two_three", F::neutral_control, M::substring_replace, "two", "three",
      "two->three", C::cardinal_numeral);
  add("nc_three_four", F::neutral_control, M::substring_replace, "three", "four",
      "three->four", C::cardinal_numeral);
  add("nc_four_five", F::neutral_control, M::substring_replace, "four", "five",
      "four->five", C::cardinal_numeral);
  add("nc_one_two", F::neutral_control, M::substring_replace, "one", "two", "one->two",
      C::cardinal_numeral);
  return specs;
}

std::vector<PerturbationSpec> load_perturbation_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open perturbation specs file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid perturbation specs JSON: " + std::string(e.what()));
  }
  std::vector<PerturbationSpec> specs;
  for (const auto& item : j) {
    PerturbationSpec s;
    s.id = item.at("id").get<std::string>();
    auto f = parse_family(item.at("family").get<std::string>());
    if (!f) throw DataError("invalid family in spec " + s.id);
    s.family = *f;
    std::string mode = item.at("mode").get<std::string>();
    if (mode == "prefix") s.mode = PerturbMode::prefix;
    else if (mode == "suffix") s.mode = PerturbMode::suffix;
    else if (mode == "insert_before_verb") s.mode = PerturbMode::insert_before_verb;
    else if (mode == "substring_replace") s.mode = PerturbMode::substring_replace;
    else throw DataError("invalid mode in spec " + s.id);
    s.trigger = item.value("trigger", "");
    s.payload = item.at("payload").get<std::string>();
    s.display = item.value("display", s.payload);
    if (item.contains("control_family") && !item["control_family"].is_null()) {
      std::string cf = item["control_family"].get<std::string>();
      if (cf == "reporting_verb") s.control_family = ControlFamily::reporting_verb;
      else if (cf == "day_of_week") s.control_family = ControlFamily::day_of_week;
      else if (cf == "temporal_connective") s.control_family = ControlFamily::temporal_connective;
      else if (cf == "cardinal_numeral") s.control_family = ControlFamily::cardinal_numeral;
      else throw DataError("invalid control_family in spec " + s.id);
    }
    if (s.mode == PerturbMode::substring_replace && s.trigger.empty())
      throw DataError("substitution spec without trigger: " + s.id);
    specs.push_back(std::move(s));
  }
  return specs;
}

CounterfactualRun run_counterfactuals(const std::vector<EventRecord>& events,
                                      const std::vector<PerturbationSpec>& specs,
                                      const std::vector<ModelUnderTest>& models,
                                      int parallelism, std::int64_t review_sample_n,
                                      std::uint64_t review_seed) {
  CounterfactualRun run;
  std::vector<std::pair<std::string, std::string>> all_pairs;

  for (const auto& model : models) {
    // Original verdicts once per event.
    auto original = modelgate::classify_batch(events, model.strategy, model.endpoint,
                                              parallelism);
    std::map<std::string, const Prediction*> orig_by_event;
    for (const auto& p : original.predictions) orig_by_event[p.event_id] = &p;
    run.excluded_failures += static_cast<std::int64_t>(original.failures.size());

    // Perturbed variants, honoring the one-per-control-family rule. The
    // variant keeps the original event_id: endpoints (mock hashing, replay
    // lookup) must see the event they know; only the notes change.
    struct Variant {
      EventRecord event;
      const PerturbationSpec* spec;
    };
    std::vector<Variant> variants;
    for (const auto& event : events) {
      if (!orig_by_event.count(event.event_id)) continue;
      std::set<ControlFamily> fired_controls;
      for (const auto& spec : specs) {
        if (spec.control_family && fired_controls.count(*spec.control_family)) continue;
        auto applied = apply_perturbation(event.notes, spec);
        if (!applied) continue;
        if (spec.control_family) fired_controls.insert(*spec.control_family);
        EventRecord perturbed = event;
        perturbed.notes = applied->text;
        perturbed.notes_length = static_cast<int>(applied->text.size());
        all_pairs.emplace_back(event.notes, applied->text);
        variants.push_back({std::move(perturbed), &spec});
      }
    }

    // Index-addressed fan-out; duplicate event ids across variants are fine.
    std::vector<modelgate::ClassifyResult> results(variants.size());
    std::atomic<std::size_t> next{0};
    int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(variants.size())));
    auto worker = [&]() {
      auto endpoint = modelgate::make_endpoint(model.endpoint);
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= variants.size()) break;
        results[i] = modelgate::classify(variants[i].event, model.strategy, *endpoint,
                                         model.endpoint);
      }
    };
    if (workers <= 1 || variants.empty()) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (int i = 0; i < workers; ++i) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }

    for (std::size_t i = 0; i < variants.size(); ++i) {
      const auto& v = variants[i];
      if (!results[i].prediction) {
        ++run.excluded_failures;
        continue;
      }
      const Prediction* orig = orig_by_event[v.event.event_id];
      const Prediction& pert = *results[i].prediction;
      PerturbationOutcome o;
      o.event_id = v.event.event_id;
      o.spec_id = v.spec->id;
      o.family = v.spec->family;
      o.display = v.spec->display;
      o.model_id = model.endpoint.model;
      o.original_label = orig->label;
      o.perturbed_label = pert.label;
      o.flipped = o.original_label != o.perturbed_label;
      o.confidence_delta = pert.confidence - orig->confidence;
      o.original_rationale = orig->rationale;
      o.perturbed_rationale = pert.rationale;
      (o.family == Family::neutral_control ? run.neutral_outcomes : run.outcomes)
          .push_back(std::move(o));
    }
  }

  auto sort_key = [](const PerturbationOutcome& o) {
    return std::tie(o.event_id, o.spec_id, o.model_id);
  };
  std::sort(run.outcomes.begin(), run.outcomes.end(),
            [&](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
  std::sort(run.neutral_outcomes.begin(), run.neutral_outcomes.end(),
            [&](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });

  if (review_sample_n > 0 && !all_pairs.empty()) {
    Rng rng(review_seed);
    rng.shuffle(all_pairs);
    all_pairs.resize(std::min<std::size_t>(all_pairs.size(),
                                           static_cast<std::size_t>(review_sample_n)));
    run.review_samples = std::move(all_pairs);
  }
  return run;
}

WordLevelTable word_level_table(const std::vector<PerturbationOutcome>& outcomes,
                                const std::vector<PerturbationOutcome>& neutral_outcomes) {
  if (neutral_outcomes.empty())
    throw DataError("word_level_table: neutral outcomes must be non-empty");
  WordLevelTable table;
  table.baseline_n = static_cast<std::int64_t>(neutral_outcomes.size());
  for (const auto& o : neutral_outcomes) table.baseline_flips += o.flipped ? 1 : 0;
  table.baseline_rate =
      static_cast<double>(table.baseline_flips) / static_cast<double>(table.baseline_n);
  table.baseline_ci = stats::clopper_pearson(table.baseline_flips, table.baseline_n);

  std::map<std::pair<std::string, Family>, std::vector<const PerturbationOutcome*>> cells;
  for (const auto& o : outcomes) cells[{o.display, o.family}].push_back(&o);

  for (const auto& [key, members] : cells) {
    WordLevelRow row;
    row.display = key.first;
    row.family = key.second;
    row.n = static_cast<std::int64_t>(members.size());
    for (const auto* o : members) {
      row.flips += o->flipped ? 1 : 0;
      ++row.per_model_n[o->model_id];
    }
    row.flip_rate = static_cast<double>(row.flips) / static_cast<double>(row.n);
    row.ci = stats::clopper_pearson(row.flips, row.n);
    row.delta_phi_pp = (row.flip_rate - table.baseline_rate) * 100.0;
    row.h = stats::cohen_h(row.flip_rate, table.baseline_rate);
    row.p = stats::chi_or_fisher(row.flips, row.n - row.flips, table.baseline_flips,
                                 table.baseline_n - table.baseline_flips);
    table.rows.push_back(std::move(row));
  }
  std::sort(table.rows.begin(), table.rows.end(),
            [](const WordLevelRow& a, const WordLevelRow& b) {
              if (a.flip_rate != b.flip_rate) return a.flip_rate > b.flip_rate;
              if (a.n != b.n) return a.n > b.n;
              return a.display < b.display;
            });
  return table;
}

VulnerabilityMatrix vulnerability_matrix(
    const std::vector<PerturbationOutcome>& outcomes,
    const std::vector<PerturbationOutcome>& neutral_outcomes) {
  VulnerabilityMatrix m;
  for (const auto& o : neutral_outcomes) {
    auto& cell = m.neutral_by_model[o.model_id];
    cell.first += o.flipped ? 1 : 0;
    ++cell.second;
  }
  std::map<std::pair<std::string, Family>, std::vector<const PerturbationOutcome*>> cells;
  for (const auto& o : outcomes) cells[{o.model_id, o.family}].push_back(&o);

  for (const auto& [key, members] : cells) {
    auto nit = m.neutral_by_model.find(key.first);
    if (nit == m.neutral_by_model.end())
      throw DataError("vulnerability_matrix: no neutral outcomes for model " + key.first);
    VulnerabilityRow row;
    row.model_id = key.first;
    row.family = key.second;
    row.n = static_cast<std::int64_t>(members.size());
    double conf_shift = 0.0;
    for (const auto* o : members) {
      row.flips += o->flipped ? 1 : 0;
      conf_shift += o->confidence_delta;
    }
    row.flip_rate = static_cast<double>(row.flips) / static_cast<double>(row.n);
    row.ci = stats::clopper_pearson(row.flips, row.n);
    row.mean_confidence_shift = conf_shift / static_cast<double>(row.n);
    auto [base_flips, base_n] = nit->second;
    double base_rate = base_n > 0 ? static_cast<double>(base_flips) / base_n : 0.0;
    row.h = stats::cohen_h(row.flip_rate, base_rate);
    row.p = stats::fisher_exact(row.flips, row.n - row.flips, base_flips,
                                base_n - base_flips);
    m.rows.push_back(std::move(row));
  }
  std::sort(m.rows.begin(), m.rows.end(),
            [](const VulnerabilityRow& a, const VulnerabilityRow& b) {
              if (a.family != b.family) return static_cast<int>(a.family) < static_cast<int>(b.family);
              return a.model_id < b.model_id;
            });
  return m;
}

std::map<std::string, std::vector<double>> flip_profiles(
    const std::vector<PerturbationOutcome>& outcomes) {
  std::map<std::string, std::array<std::pair<std::int64_t, std::int64_t>, 8>> acc;
  for (const auto& o : outcomes) {
    if (o.family == Family::neutral_control) continue;
    auto& cell = acc[o.event_id][static_cast<int>(o.family)];
    cell.first += o.flipped ? 1 : 0;
    ++cell.second;
  }
  std::map<std::string, std::vector<double>> profiles;
  for (const auto& [event_id, cells] : acc) {
    std::vector<double> p(8, 0.0);
    for (int i = 0; i < 8; ++i)
      if (cells[i].second > 0)
        p[i] = static_cast<double>(cells[i].first) / static_cast<double>(cells[i].second);
    profiles[event_id] = std::move(p);
  }
  return profiles;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct KmeansFit {
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
};

KmeansFit kmeans(const std::vector<std::vector<double>>& points, int k, Rng& rng) {
  std::size_t n = points.size();
  std::size_t dim = points[0].size();
  // k-means++ seeding.
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[rng.next_below(n)]);
  std::vector<double> d2(n, 0.0);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = 1e300;
      for (const auto& c : centroids) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.next_below(n);
    } else {
      double r = rng.next_double() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
  }

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < k; ++c) {
        double d = sq_dist(points[i], centroids[static_cast<std::size_t>(c)]);
        if (d < best_d - 1e-15) {
          best_d = d;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                          std::vector<double>(dim, 0.0));
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[static_cast<std::size_t>(assignment[i])];
      for (std::size_t d = 0; d < dim; ++d)
        sums[static_cast<std::size_t>(assignment[i])][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // keep old centroid
      for (std::size_t d = 0; d < dim; ++d)
        centroids[static_cast<std::size_t>(c)][d] =
            sums[static_cast<std::size_t>(c)][d] /
            static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    if (!changed) break;
  }
  KmeansFit fit;
  fit.assignment = std::move(assignment);
  fit.centroids = std::move(centroids);
  for (std::size_t i = 0; i < n; ++i)
    fit.inertia += sq_dist(points[i], fit.centroids[static_cast<std::size_t>(fit.assignment[i])]);
  return fit;
}

double mean_silhouette(const std::vector<std::vector<double>>& points,
                       const std::vector<int>& assignment, int k) {
  std::size_t n = points.size();
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int own = assignment[i];
    if (sizes[static_cast<std::size_t>(own)] <= 1) continue;  // singleton: s = 0
    std::vector<double> mean_dist(static_cast<std::size_t>(k), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_dist[static_cast<std::size_t>(assignment[j])] +=
          std::sqrt(sq_dist(points[i], points[j]));
    }
    double a = mean_dist[static_cast<std::size_t>(own)] /
               static_cast<double>(sizes[static_cast<std::size_t>(own)] - 1);
    double b = 1e300;
    for (int c = 0; c < k; ++c) {
      if (c == own || sizes[static_cast<std::size_t>(c)] == 0) continue;
      b = std::min(b, mean_dist[static_cast<std::size_t>(c)] /
                          static_cast<double>(sizes[static_cast<std::size_t>(c)]));
    }
    double s = std::max(a, b) > 0.0 ? (b - a) / std::max(a, b) : 0.0;
    total += s;
  }
  return total / static_cast<double>(n);
}

}  // namespace

ClusterResult sensitivity_clusters(const std::map<std::string, std::vector<double>>& profiles,
                                   std::uint64_t seed) {
  if (profiles.size() < 2)
    throw DataError("sensitivity_clusters: need >= 2 events with profiles");
  ClusterResult result;
  std::vector<std::vector<double>> points;
  for (const auto& [event_id, p] : profiles) {
    result.event_ids.push_back(event_id);
    std::vector<double> clamped = p;
    for (auto& v : clamped) v = std::clamp(v, 0.0, 1.0);
    points.push_back(std::move(clamped));
  }

  std::set<std::vector<double>> distinct(points.begin(), points.end());
  if (distinct.size() < 2) {
    result.assignment.assign(points.size(), 0);
    result.centroids = {points[0]};
    result.k = 1;
    result.degenerate = true;
    return result;
  }

  int max_k = static_cast<int>(std::min<std::size_t>(8, distinct.size()));
  double best_sil = -2.0;
  for (int k = 2; k <= max_k; ++k) {
    KmeansFit best_fit;
    double best_inertia = 1e300;
    for (int restart = 0; restart < 8; ++restart) {
      Rng rng(seed * 1315423911ULL + static_cast<std::uint64_t>(k) * 2654435761ULL +
              static_cast<std::uint64_t>(restart));
      KmeansFit fit = kmeans(points, k, rng);
      if (fit.inertia < best_inertia - 1e-12) {
        best_inertia = fit.inertia;
        best_fit = std::move(fit);
      }
    }
    double sil = mean_silhouette(points, best_fit.assignment, k);
    if (sil > best_sil + 1e-12) {
      best_sil = sil;
      result.assignment = best_fit.assignment;
      result.centroids = best_fit.centroids;
      result.k = k;
      result.silhouette = sil;
    }
  }
  return result;
}

}  // namespace caudit::counterfact
