#include "caudit/data.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "caudit/ambiguity.hpp"
#include "caudit/corpus.hpp"
#include "caudit/counterfact.hpp"
#include "caudit/modelgate.hpp"

namespace caudit {

namespace {

using nlohmann::ordered_json;

void write_file(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write data file: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

void dump_default_data(const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::filesystem::path root(dir);

  ordered_json rules = ordered_json::array();
  for (const auto& r : corpus::default_actor_rules()) {
    ordered_json j;
    j["pattern"] = r.pattern;
    j["group"] = actor_group_str(r.group);
    j["country"] = r.country_scope ? ordered_json(*r.country_scope) : ordered_json(nullptr);
    j["priority"] = r.priority;
    rules.push_back(j);
  }
  write_file(root / "actor_rules.json", rules);

  ordered_json specs = ordered_json::array();
  for (const auto& s : counterfact::default_perturbation_specs()) {
    ordered_json j;
    j["id"] = s.id;
    j["family"] = counterfact::family_str(s.family);
    switch (s.mode) {
      case counterfact::PerturbMode::prefix: j["mode"] = "prefix"; break;
      case counterfact::PerturbMode::suffix: j["mode"] = "suffix"; break;
      case counterfact::PerturbMode::insert_before_verb:
        j["mode"] = "insert_before_verb";
        break;
      case counterfact::PerturbMode::substring_replace:
        j["mode"] = "substring_replace";
        break;
    }
    j["trigger"] = s.trigger;
    j["payload"] = s.payload;
    j["display"] = s.display;
    j["control_family"] = s.control_family
                              ? ordered_json(counterfact::control_family_str(*s.control_family))
                              : ordered_json(nullptr);
    specs.push_back(j);
  }
  write_file(root / "perturbation_specs.json", specs);

  auto lex = ambiguity::default_text_lexicons();
  ordered_json lexicons;
  lexicons["unidentified_actor"] = lex.unidentified_actor;
  lexicons["civilian_victim"] = lex.civilian_victim;
  lexicons["organized_armed_group"] = lex.organized_armed_group;
  lexicons["targeting_language"] = lex.targeting_language;
  lexicons["kinetic_verbs"] = lex.kinetic_verbs;
  write_file(root / "ambiguity_lexicons.json", lexicons);

  ordered_json pool;
  auto example_pool = modelgate::default_example_pool();
  for (Label l : kLabels) {
    ordered_json demos = ordered_json::array();
    for (const auto& d : example_pool.at(l)) {
      ordered_json j;
      j["text"] = d.text;
      j["label"] = label_str(d.label);
      j["confidence"] = d.confidence;
      ordered_json logits;
      for (int i = 0; i < 6; ++i)
        logits[std::string(1, kLabelCodes[i])] = d.logits[i];
      j["logits"] = logits;
      demos.push_back(j);
    }
    pool[label_str(l)] = demos;
  }
  write_file(root / "example_pool.json", pool);
}

}  // namespace caudit
