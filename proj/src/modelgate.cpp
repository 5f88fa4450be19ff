#include "caudit/modelgate.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include "caudit/rng.hpp"

namespace caudit::modelgate {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct PoolEntry {
  const char* text;
  Label label;
  double conf;
  LabelDist logits;
};

const PoolEntry kPool[] = {
    {"Military forces shot and injured a woman in Nongomadiba when they fired shots at a building they believed to be holding Ambazonian Separatists.",
     Label::V, 0.89, {0.89, 0.05, 0.02, 0.01, 0.02, 0.01}},
    {"Security forces opened fire on civilians during a raid in Bamenda, killing two people.",
     Label::V, 0.94, {0.94, 0.03, 0.01, 0.01, 0.01, 0.00}},
    {"Armed soldiers beat and detained three civilians suspected of supporting separatists in Kumbo.",
     Label::V, 0.86, {0.86, 0.02, 0.01, 0.02, 0.03, 0.06}},
    {"Police forces tortured detainees at a checkpoint in Buea, injuring five individuals.",
     Label::V, 0.91, {0.91, 0.03, 0.01, 0.01, 0.02, 0.02}},
    {"Military personnel looted civilian homes and assaulted residents in Mamfe.",
     Label::V, 0.87, {0.87, 0.02, 0.01, 0.02, 0.05, 0.03}},
    {"The police forces killed one suspected Boko Haram fighter and arrested another in Aissa Karde village.",
     Label::B, 0.82, {0.08, 0.82, 0.03, 0.01, 0.02, 0.04}},
    {"Military forces clashed with separatist fighters in Belo, resulting in casualties on both sides.",
     Label::B, 0.93, {0.03, 0.93, 0.02, 0.01, 0.01, 0.00}},
    {"Government troops engaged Boko Haram militants near Fotokol, killing several insurgents.",
     Label::B, 0.91, {0.04, 0.91, 0.03, 0.00, 0.01, 0.01}},
    {"Armed forces exchanged fire with rebel groups in the Northwest region for several hours.",
     Label::B, 0.89, {0.05, 0.89, 0.03, 0.01, 0.01, 0.01}},
    {"Security forces raided a separatist hideout in Kumba, killing three fighters.",
     Label::B, 0.85, {0.06, 0.85, 0.02, 0.01, 0.02, 0.04}},
    {"An IED planted by suspected Ambazonian separatists detonated in Matezen village, Santa subdivision, injuring three people.",
     Label::E, 0.96, {0.02, 0.01, 0.96, 0.00, 0.01, 0.00}},
    {"A roadside bomb exploded near a military convoy in Kolofata, wounding two soldiers.",
     Label::E, 0.95, {0.02, 0.02, 0.95, 0.00, 0.01, 0.00}},
    {"Unidentified militants launched a mortar attack on a police station in Mora.",
     Label::E, 0.92, {0.03, 0.03, 0.92, 0.00, 0.01, 0.01}},
    {"An explosive device detonated at a market in Maroua, killing one civilian and injuring ten.",
     Label::E, 0.94, {0.03, 0.01, 0.94, 0.01, 0.01, 0.00}},
    {"Suspected insurgents fired rockets at a military base in the Far North region.",
     Label::E, 0.93, {0.02, 0.03, 0.93, 0.00, 0.01, 0.01}},
    {"About a hundred residents demonstrated in Djoum town against the government's delay in compensating them after destroying their houses to build the Bikouna-Djoum road.",
     Label::P, 0.88, {0.02, 0.01, 0.01, 0.88, 0.06, 0.02}},
    {"Teachers held a peaceful protest in Yaounde demanding better salaries and working conditions.",
     Label::P, 0.95, {0.01, 0.00, 0.00, 0.95, 0.03, 0.01}},
    {"Students marched through Douala to protest tuition fee increases at public universities.",
     Label::P, 0.93, {0.01, 0.01, 0.00, 0.93, 0.04, 0.01}},
    {"Civil society groups organized a demonstration in Bamenda calling for dialogue and peace.",
     Label::P, 0.91, {0.02, 0.01, 0.01, 0.91, 0.04, 0.01}},
    {"Healthcare workers staged a sit-in at the Ministry of Health demanding payment of arrears.",
     Label::P, 0.90, {0.01, 0.01, 0.00, 0.90, 0.05, 0.03}},
    {"Residents beat and killed 1 civilian from Ngouma in Tchika, accusing the victim of witchcraft.",
     Label::R, 0.79, {0.12, 0.03, 0.01, 0.03, 0.79, 0.02}},
    {"A mob attacked and burned shops owned by foreigners in Garoua following a dispute.",
     Label::R, 0.84, {0.08, 0.02, 0.02, 0.02, 0.84, 0.02}},
    {"Angry youths vandalized government buildings in Buea after a controversial election result.",
     Label::R, 0.81, {0.05, 0.02, 0.02, 0.08, 0.81, 0.02}},
    {"Residents clashed with police in Edea, destroying vehicles and blocking roads.",
     Label::R, 0.83, {0.06, 0.04, 0.01, 0.04, 0.83, 0.02}},
    {"A violent crowd looted stores and set fire to a police post in Nkongsamba.",
     Label::R, 0.80, {0.09, 0.03, 0.02, 0.03, 0.80, 0.03}},
    {"Military forces arrested several civilians suspected of connection with ISWAP or Boko Haram militants in Djakana.",
     Label::S, 0.77, {0.10, 0.05, 0.02, 0.02, 0.04, 0.77}},
    {"Government troops increased patrols and established new checkpoints in the Anglophone regions.",
     Label::S, 0.85, {0.04, 0.03, 0.02, 0.02, 0.04, 0.85}},
    {"Security forces conducted a cordon-and-search operation in Mokolo, detaining suspected militants.",
     Label::S, 0.81, {0.07, 0.05, 0.02, 0.01, 0.04, 0.81}},
    {"The army deployed additional personnel to the Far North region to counter insurgent threats.",
     Label::S, 0.83, {0.05, 0.04, 0.03, 0.01, 0.04, 0.83}},
    {"Authorities imposed a curfew in several towns following reports of separatist activity.",
     Label::S, 0.79, {0.06, 0.04, 0.02, 0.03, 0.06, 0.79}},
};

const char kCategoryBlock[] =
    "Categories (use ONLY these single-letter codes):\n"
    "- V = Violence against civilians\n"
    "- B = Battles\n"
    "- E = Explosions/Remote violence\n"
    "- P = Protests\n"
    "- R = Riots\n"
    "- S = Strategic developments\n";

ordered_json logits_schema() {
  ordered_json props;
  for (char c : kLabelCodes) props[std::string(1, c)] = {{"type", "number"}};
  return ordered_json{{"type", "object"}, {"properties", props}};
}

ordered_json schema_for(Strategy s) {
  ordered_json props;
  if (s == Strategy::explainable)
    props["reasoning"] = {{"type", "array"}, {"items", {{"type", "string"}}}};
  props["label"] = {{"type", "string"},
                    {"enum", {"V", "B", "E", "P", "R", "S"}}};
  props["confidence"] = {{"type", "number"}};
  props["logits"] = logits_schema();
  ordered_json required = ordered_json::array();
  if (s == Strategy::explainable) required.push_back("reasoning");
  required.push_back("label");
  required.push_back("confidence");
  if (s != Strategy::zero_shot) required.push_back("logits");
  return ordered_json{{"type", "object"}, {"properties", props}, {"required", required}};
}

std::string demo_json_line(const Demonstration& d) {
  std::string s = "{\"label\": \"" + label_str(d.label) + "\", \"confidence\": " +
                  py_float_repr(d.confidence) + ", \"logits\": {";
  for (std::size_t i = 0; i < 6; ++i) {
    if (i) s += ", ";
    s += "\"" + std::string(1, kLabelCodes[i]) + "\": " + py_float_repr(d.logits[i]);
  }
  s += "}}";
  return s;
}

}  // namespace

std::string py_float_repr(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e16) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return std::to_string(v);
}

std::map<Label, std::vector<Demonstration>> default_example_pool() {
  std::map<Label, std::vector<Demonstration>> pool;
  for (const auto& e : kPool)
    pool[e.label].push_back({e.text, e.label, e.conf, e.logits});
  return pool;
}

std::map<Label, std::vector<Demonstration>> load_example_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open example pool file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("invalid example pool JSON: " + std::string(e.what()));
  }
  std::map<Label, std::vector<Demonstration>> pool;
  for (Label l : kLabels) {
    std::string key = label_str(l);
    if (!j.contains(key)) continue;
    for (const auto& item : j[key]) {
      Demonstration d;
      d.text = item.at("text").get<std::string>();
      auto dl = parse_label(item.at("label").get<std::string>());
      if (!dl) throw DataError("invalid label in example pool");
      d.label = *dl;
      d.confidence = item.at("confidence").get<double>();
      for (int i = 0; i < 6; ++i)
        d.logits[i] = item.at("logits").value(std::string(1, kLabelCodes[i]), 0.0);
      pool[l].push_back(std::move(d));
    }
  }
  if (pool.empty()) throw DataError("example pool file holds no demonstrations");
  return pool;
}

Prompt build_prompt(const EventRecord& event, const StrategyConfig& cfg) {
  if (cfg.strategy == Strategy::few_shot &&
      (cfg.examples_per_category < 1 || cfg.examples_per_category > 5))
    throw ConfigError("examples_per_category must be between 1 and 5");

  Prompt p;
  p.response_schema = schema_for(cfg.strategy);

  if (cfg.strategy == Strategy::zero_shot) {
    std::ostringstream out;
    out << "You are an expert political conflict event analyst.\n\n"
        << "Classify the following event into one of six categories: " << event.notes
        << "\n\n"
        << kCategoryBlock << "\n"
        << "Return ONLY valid JSON with this structure:\n"
        << "{\n"
        << "    \"label\": \"<V, B, E, P, R, or S>\",\n"
        << "    \"confidence\": <decimal between 0 and 1>,\n"
        << "    \"logits\": {\"V\": <num>, \"B\": <num>, \"E\": <num>, \n"
        << "                \"P\": <num>, \"R\": <num>, \"S\": <num>}\n"
        << "}\n\n"
        << "CRITICAL: The \"label\" field must be exactly one of: V, B, E, P, R, S\n"
        << "Do not use numbers, full words, or any other values.\n\n"
        << "Additional requirements for `logits`:\n"
        << "- Each value in the `logits` object must be a decimal probability "
           "between 0 and 1.\n"
        << "- The six logits (V, B, E, P, R, S) must sum to 1.0.\n";
    p.user = out.str();
    return p;
  }

  if (cfg.strategy == Strategy::few_shot) {
    std::ostringstream demos;
    for (Label l : kLabels) {
      auto it = cfg.example_pool.find(l);
      int have = it == cfg.example_pool.end() ? 0 : static_cast<int>(it->second.size());
      if (have < cfg.examples_per_category)
        throw ConfigError("insufficient example pool for label " + label_str(l));
      for (int i = 0; i < cfg.examples_per_category; ++i) {
        const auto& d = it->second[static_cast<std::size_t>(i)];
        demos << "Event: " << d.text << "\n" << demo_json_line(d) << "\n\n";
      }
    }
    std::string examples = demos.str();
    if (!examples.empty()) examples.pop_back();  // single blank line after last demo

    std::ostringstream out;
    out << "Examples:\n\n"
        << examples
        << "\n--- Now classify the following event in the same format ---\n"
        << "Final Answer: JSON matching the examples above.\n\n"
        << "Return ONLY valid JSON with this structure:\n"
        << "{\n"
        << "    \"label\": \"<V, B, E, P, R, or S>\",\n"
        << "    \"confidence\": <decimal between 0 and 1>,\n"
        << "    \"logits\": {\n"
        << "        \"V\": <num>, \"B\": <num>, \"E\": <num>,\n"
        << "        \"P\": <num>, \"R\": <num>, \"S\": <num>\n"
        << "    }\n"
        << "}\n\n"
        << "Additional requirements for `logits`:\n"
        << "- Each value must be between 0 and 1.\n"
        << "- The six logits must sum to 1.0.\n\n"
        << "Event: " << event.notes << "\n";
    p.user = out.str();
    p.system =
        "You are an expert political conflict event analyst.\n"
        "Classify events into one of six categories:\n"
        "- V = Violence against civilians\n"
        "- B = Battles\n"
        "- E = Explosions/Remote violence\n"
        "- P = Protests\n"
        "- R = Riots\n"
        "- S = Strategic developments\n\n"
        "Return JSON with label, confidence (0-1), and logits.";
    return p;
  }

  std::ostringstream out;
  out << "You are an expert political conflict event analyst.\n\n"
      << "Classify the following event into one of six categories: " << event.notes
      << "\n\n"
      << kCategoryBlock << "\n"
      << "Step 1 - Brief structured reasoning (exactly three short items):\n"
      << "- Provide three numbered, one-line observations:\n"
      << "  1. Key actors (who)\n"
      << "  2. Key actions (what)\n"
      << "  3. Category rationale (why)\n"
      << "- Each observation must be at most 20 words.\n"
      << "- No extra commentary.\n\n"
      << "Step 2 - Final answer (valid JSON only):\n"
      << "Return ONLY valid JSON with this structure:\n"
      << "{\n"
      << "    \"reasoning\": [<three strings>],\n"
      << "    \"label\": \"<V, B, E, P, R, or S>\",\n"
      << "    \"confidence\": <decimal between 0 and 1>,\n"
      << "    \"logits\": {\n"
      << "        \"V\": <num>, \"B\": <num>, \"E\": <num>,\n"
      << "        \"P\": <num>, \"R\": <num>, \"S\": <num>\n"
      << "    }\n"
      << "}\n\n"
      << "CRITICAL: \"label\" must be exactly one of V, B, E, P, R, S.\n\n"
      << "Additional requirements for `logits`:\n"
      << "- Each value must be between 0 and 1.\n"
      << "- The six logits must sum to 1.0.\n";
  p.user = out.str();
  p.system =
      "You are an expert political conflict event analyst. "
      "Always explain your reasoning step-by-step before classification.";
  return p;
}

namespace {

// First balanced top-level object that parses; models often wrap the JSON in
// prose despite instructions.
std::optional<json> extract_json_object(const std::string& raw) {
  for (std::size_t start = raw.find('{'); start != std::string::npos;
       start = raw.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
      char c = raw[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          auto parsed = json::parse(raw.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;  // balanced but malformed; try the next opening brace
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace

ParseOutcome parse_response(const std::string& raw, Strategy strategy) {
  ParseOutcome out;
  auto obj = extract_json_object(raw);
  if (!obj) {
    out.error = "no JSON object found in response";
    return out;
  }
  const json& j = *obj;

  if (!j.contains("label") || !j["label"].is_string()) {
    out.error = "missing label";
    return out;
  }
  auto label = parse_label(j["label"].get<std::string>());
  if (!label || j["label"].get<std::string>().size() != 1) {
    out.error = "invalid label: " + j["label"].dump();
    return out;
  }
  if (!j.contains("confidence") || !j["confidence"].is_number()) {
    out.error = "missing confidence";
    return out;
  }
  double conf = j["confidence"].get<double>();
  if (conf < 0.0 || conf > 1.0) {
    out.error = "confidence outside [0,1]";
    return out;
  }

  Prediction p;
  p.label = *label;
  p.confidence = conf;
  p.strategy = strategy;
  p.raw_response = raw;

  if (j.contains("logits") && j["logits"].is_object()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      std::string key(1, kLabelCodes[i]);
      double v = 0.0;
      if (j["logits"].contains(key)) {
        if (!j["logits"][key].is_number()) {
          out.error = "non-numeric logit for " + key;
          return out;
        }
        v = j["logits"][key].get<double>();
      }
      if (v < 0.0 || v > 1.0) {
        out.error = "logit outside [0,1] for " + key;
        return out;
      }
      p.logits[i] = v;
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 0.01) {
      out.error = "logits sum deviates from 1 by more than 0.01";
      return out;
    }
    if (sum != 1.0) {
      for (auto& v : p.logits) v /= sum;
      out.logits_renormalized = true;
    }
  } else {
    // Zero-shot schema leaves logits optional; rebuild a valid distribution
    // from the scalar confidence.
    double rest = (1.0 - conf) / 5.0;
    for (std::size_t i = 0; i < 6; ++i) p.logits[i] = rest;
    p.logits[static_cast<int>(p.label)] = conf;
    out.logits_synthesized = true;
  }

  if (strategy == Strategy::explainable) {
    if (!j.contains("reasoning") || !j["reasoning"].is_array() ||
        j["reasoning"].size() != 3) {
      out.error = "reasoning must be a list of exactly 3 items";
      return out;
    }
    std::vector<std::string> items;
    for (const auto& item : j["reasoning"]) {
      if (!item.is_string()) {
        out.error = "reasoning items must be strings";
        return out;
      }
      items.push_back(item.get<std::string>());
    }
    p.rationale = std::move(items);
  } else if (j.contains("reasoning") && j["reasoning"].is_array() &&
             j["reasoning"].size() == 3) {
    std::vector<std::string> items;
    bool ok = true;
    for (const auto& item : j["reasoning"]) {
      if (!item.is_string()) ok = false;
      else items.push_back(item.get<std::string>());
    }
    if (ok) p.rationale = std::move(items);
  }

  out.prediction = std::move(p);
  return out;
}

std::uint64_t request_digest(const std::string& prompt_user) {
  return fnv1a(prompt_user);
}

namespace {

class MockEndpoint : public ModelEndpoint {
 public:
  explicit MockEndpoint(bool text_sensitive) : text_sensitive_(text_sensitive) {}

  CompletionResult complete(const CompletionRequest& req) override {
    std::uint64_t h = fnv1a(req.event_id);
    h = fnv1a("\x1f", h);
    h = fnv1a(req.model, h);
    if (text_sensitive_) {
      h = fnv1a("\x1f", h);
      h = fnv1a(req.notes, h);
    }
    int label_idx = static_cast<int>(h % 6);
    double conf = 0.5 + static_cast<double>((h >> 8) % 4096) / 4096.0 * 0.49;

    LabelDist logits{};
    double rest = 1.0 - conf;
    std::uint64_t w = h >> 16;
    double wsum = 0.0;
    std::array<double, 6> weights{};
    for (int i = 0; i < 6; ++i) {
      if (i == label_idx) continue;
      weights[i] = 1.0 + static_cast<double>((w >> (i * 6)) & 0x3F);
      wsum += weights[i];
    }
    for (int i = 0; i < 6; ++i)
      logits[i] = i == label_idx ? conf : rest * weights[i] / wsum;

    ordered_json body;
    if (req.strategy == Strategy::explainable) {
      std::istringstream words(req.notes);
      std::string w1, w2;
      words >> w1 >> w2;
      body["reasoning"] = {"1. Key actors: " + w1 + " " + w2,
                           "2. Key actions: reported in the event text",
                           "3. Category rationale: matches code " +
                               label_str(kLabels[label_idx])};
    }
    body["label"] = label_str(kLabels[label_idx]);
    char cbuf[32];
    std::snprintf(cbuf, sizeof(cbuf), "%.4f", conf);
    body["confidence"] = json::parse(cbuf);
    ordered_json lj;
    for (int i = 0; i < 6; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", logits[i]);
      lj[std::string(1, kLabelCodes[i])] = json::parse(buf);
    }
    body["logits"] = lj;
    return {true, body.dump(), "", false};
  }

 private:
  bool text_sensitive_;
};

class ConstantEndpoint : public ModelEndpoint {
 public:
  explicit ConstantEndpoint(Label label) : label_(label) {}

  CompletionResult complete(const CompletionRequest&) override {
    ordered_json body;
    body["reasoning"] = {"1. Key actors: fixed", "2. Key actions: fixed",
                         "3. Category rationale: constant verdict"};
    body["label"] = label_str(label_);
    body["confidence"] = 0.9;
    ordered_json lj;
    for (int i = 0; i < 6; ++i)
      lj[std::string(1, kLabelCodes[i])] =
          i == static_cast<int>(label_) ? 0.9 : 0.02;
    body["logits"] = lj;
    return {true, body.dump(), "", false};
  }

 private:
  Label label_;
};

class ReplayEndpoint : public ModelEndpoint {
 public:
  explicit ReplayEndpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EndpointError("cannot open replay file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw EndpointError("invalid replay line in " + path);
      std::string event_id = j.value("event_id", "");
      std::string raw = j.value("raw_response", "");
      if (raw.empty()) {
        // Third-party dumps may lack raw text; rebuild a canonical response.
        ordered_json body;
        if (j.contains("rationale") && !j["rationale"].is_null())
          body["reasoning"] = j["rationale"];
        body["label"] = j.value("label", "");
        body["confidence"] = j.value("confidence", 0.0);
        if (j.contains("logits")) body["logits"] = j["logits"];
        raw = body.dump();
      }
      std::uint64_t digest = j.value("request_digest", std::uint64_t{0});
      if (digest != 0)
        by_digest_[event_id + "\x1f" + std::to_string(digest)] = raw;
      by_event_.emplace(event_id, raw);
    }
  }

  CompletionResult complete(const CompletionRequest& req) override {
    auto digest_key =
        req.event_id + "\x1f" + std::to_string(request_digest(req.prompt.user));
    if (auto it = by_digest_.find(digest_key); it != by_digest_.end())
      return {true, it->second, "", false};
    if (auto it = by_event_.find(req.event_id); it != by_event_.end())
      return {true, it->second, "", false};
    return {false, "", "no replay entry for event " + req.event_id, false};
  }

 private:
  std::map<std::string, std::string> by_digest_;
  std::map<std::string, std::string> by_event_;
};

class HttpEndpoint : public ModelEndpoint {
 public:
  explicit HttpEndpoint(const EndpointConfig& cfg) : cfg_(cfg) {
    auto rest = cfg.url.substr(cfg.url.find("://") + 3);
    auto slash = rest.find('/');
    host_ = slash == std::string::npos ? rest : rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/api/chat" : rest.substr(slash);
    scheme_host_ = cfg.url.substr(0, cfg.url.find("://") + 3) + host_;
  }

  CompletionResult complete(const CompletionRequest& req) override {
    ordered_json body;
    body["model"] = req.model;
    ordered_json messages = ordered_json::array();
    if (req.prompt.system)
      messages.push_back({{"role", "system"}, {"content", *req.prompt.system}});
    messages.push_back({{"role", "user"}, {"content", req.prompt.user}});
    body["messages"] = messages;
    body["stream"] = false;
    ordered_json options;
    options["temperature"] = 0.0;
    if (cfg_.extra_options.is_object())
      for (auto& [k, v] : cfg_.extra_options.items()) options[k] = v;
    body["options"] = options;
    body["format"] = req.prompt.response_schema;

    httplib::Client client(scheme_host_);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    client.set_write_timeout(cfg_.timeout_seconds, 0);
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res)
      return {false, "", "transport error: " + httplib::to_string(res.error()), true};
    if (res->status < 200 || res->status >= 300)
      return {false, "", "HTTP status " + std::to_string(res->status), true};

    json j = json::parse(res->body, nullptr, false);
    if (!j.is_discarded()) {
      if (j.contains("message") && j["message"].contains("content"))
        return {true, j["message"]["content"].get<std::string>(), "", false};
      if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty() &&
          j["choices"][0].contains("message"))
        return {true, j["choices"][0]["message"].value("content", ""), "", false};
    }
    return {true, res->body, "", false};
  }

 private:
  EndpointConfig cfg_;
  std::string host_, path_, scheme_host_;
};

}  // namespace

std::unique_ptr<ModelEndpoint> make_endpoint(const EndpointConfig& cfg) {
  const std::string& url = cfg.url;
  if (url == "mock" || url == "mock:")
    return std::make_unique<MockEndpoint>(false);
  if (url == "mock-text" || url == "mock-text:")
    return std::make_unique<MockEndpoint>(true);
  if (url.rfind("mock-const:", 0) == 0) {
    auto label = parse_label(url.substr(11));
    if (!label) throw ConfigError("mock-const endpoint needs a label, e.g. mock-const:V");
    return std::make_unique<ConstantEndpoint>(*label);
  }
  if (url.rfind("replay:", 0) == 0)
    return std::make_unique<ReplayEndpoint>(url.substr(7));
  if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0)
    return std::make_unique<HttpEndpoint>(cfg);
  throw ConfigError("unrecognized endpoint: " + url);
}

ClassifyResult classify(const EventRecord& event, const StrategyConfig& cfg,
                        ModelEndpoint& endpoint, const EndpointConfig& endpoint_cfg) {
  Prompt prompt = build_prompt(event, cfg);
  CompletionRequest req{event.event_id, endpoint_cfg.model, event.notes, cfg.strategy,
                        prompt};

  CompletionResult res;
  int attempts = endpoint_cfg.max_retries + 1;
  for (int i = 0; i < attempts; ++i) {
    res = endpoint.complete(req);
    if (res.ok || !res.transport_failure) break;
  }
  ClassifyResult out;
  if (!res.ok) {
    out.failure = ClassifyFailure{event.event_id, endpoint_cfg.model, res.error, "",
                                  res.transport_failure};
    return out;
  }
  ParseOutcome parsed = parse_response(res.content, cfg.strategy);
  if (!parsed.prediction) {
    out.failure =
        ClassifyFailure{event.event_id, endpoint_cfg.model, parsed.error, res.content, false};
    return out;
  }
  parsed.prediction->event_id = event.event_id;
  parsed.prediction->model_id = endpoint_cfg.model;
  parsed.prediction->shots = cfg.shots();
  parsed.prediction->request_digest = request_digest(prompt.user);
  out.prediction = std::move(*parsed.prediction);
  return out;
}

BatchResult classify_batch(const std::vector<EventRecord>& events,
                           const StrategyConfig& cfg, const EndpointConfig& endpoint_cfg,
                           int parallelism) {
  std::vector<const EventRecord*> ordered;
  ordered.reserve(events.size());
  for (const auto& e : events) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(),
            [](const EventRecord* a, const EventRecord* b) {
              return a->event_id < b->event_id;
            });

  std::vector<ClassifyResult> results(ordered.size());
  std::atomic<std::size_t> next{0};
  int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(ordered.size())));
  auto run = [&]() {
    auto endpoint = make_endpoint(endpoint_cfg);
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= ordered.size()) break;
      results[i] = classify(*ordered[i], cfg, *endpoint, endpoint_cfg);
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) threads.emplace_back(run);
    for (auto& t : threads) t.join();
  }

  BatchResult batch;
  for (auto& r : results) {
    if (r.prediction) batch.predictions.push_back(std::move(*r.prediction));
    if (r.failure) batch.failures.push_back(std::move(*r.failure));
  }
  return batch;
}

nlohmann::ordered_json prediction_to_json(const Prediction& p) {
  ordered_json j;
  j["event_id"] = p.event_id;
  j["model_id"] = p.model_id;
  j["strategy"] = strategy_str(p.strategy);
  j["shots"] = p.shots;
  j["label"] = label_str(p.label);
  j["confidence"] = p.confidence;
  ordered_json lj;
  for (int i = 0; i < 6; ++i) lj[std::string(1, kLabelCodes[i])] = p.logits[i];
  j["logits"] = lj;
  j["rationale"] = p.rationale ? ordered_json(*p.rationale) : ordered_json(nullptr);
  j["raw_response"] = p.raw_response;
  j["request_digest"] = p.request_digest;
  return j;
}

Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  p.event_id = j.at("event_id").get<std::string>();
  p.model_id = j.value("model_id", "");
  auto s = parse_strategy(j.value("strategy", "zero_shot"));
  p.strategy = s.value_or(Strategy::zero_shot);
  p.shots = j.value("shots", 0);
  auto label = parse_label(j.at("label").get<std::string>());
  if (!label) throw DataError("invalid label in prediction record");
  p.label = *label;
  p.confidence = j.at("confidence").get<double>();
  if (j.contains("logits") && j["logits"].is_object()) {
    for (int i = 0; i < 6; ++i)
      p.logits[i] = j["logits"].value(std::string(1, kLabelCodes[i]), 0.0);
  }
  if (j.contains("rationale") && j["rationale"].is_array()) {
    std::vector<std::string> r;
    for (const auto& item : j["rationale"]) r.push_back(item.get<std::string>());
    p.rationale = std::move(r);
  }
  p.raw_response = j.value("raw_response", "");
  p.request_digest = j.value("request_digest", std::uint64_t{0});
  return p;
}

void write_predictions_jsonl(const std::string& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions file: " + path);
  for (const auto& p : preds) out << prediction_to_json(p).dump() << "\n";
}

std::vector<Prediction> read_predictions_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::vector<Prediction> preds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    preds.push_back(prediction_from_json(nlohmann::json::parse(line)));
  }
  return preds;
}

}  // namespace caudit::modelgate
