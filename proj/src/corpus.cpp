#include "caudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "caudit/rng.hpp"

namespace caudit::corpus {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// RFC-4180 style reader: quoted fields, embedded commas, quotes and newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool next_row(std::vector<std::string>& row) {
    row.clear();
    std::string field;
    bool in_quotes = false;
    bool saw_any = false;
    int c;
    while ((c = in_.get()) != EOF) {
      saw_any = true;
      char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            field.push_back('"');
            in_.get();
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(ch);
        }
      } else if (ch == '"') {
        in_quotes = true;
      } else if (ch == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (ch == '\r') {
        // tolerate CRLF
      } else if (ch == '\n') {
        row.push_back(std::move(field));
        return true;
      } else {
        field.push_back(ch);
      }
    }
    if (!saw_any) return false;
    row.push_back(std::move(field));
    return true;
  }

 private:
  std::istream& in_;
};

bool valid_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  int m = (s[5] - '0') * 10 + (s[6] - '0');
  int d = (s[8] - '0') * 10 + (s[9] - '0');
  return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

}  // namespace

std::vector<ActorRule> default_actor_rules() {
  // State / Non-State heuristics; "Other" is the fall-through, not a rule.
  return {
      {"military", ActorGroup::State, std::nullopt, 10},
      {"police", ActorGroup::State, std::nullopt, 10},
      {"armed forces", ActorGroup::State, std::nullopt, 10},
      {"soldiers", ActorGroup::State, std::nullopt, 10},
      {"gendarmerie", ActorGroup::State, std::nullopt, 10},
      {"government of", ActorGroup::State, std::nullopt, 10},
      {"security forces", ActorGroup::State, std::nullopt, 12},
      {"rebel", ActorGroup::NonState, std::nullopt, 20},
      {"militia", ActorGroup::NonState, std::nullopt, 20},
      {"separatist", ActorGroup::NonState, std::nullopt, 20},
      {"boko haram", ActorGroup::NonState, std::nullopt, 20},
      {"iswap", ActorGroup::NonState, std::nullopt, 20},
      {"ambazonian", ActorGroup::NonState, std::nullopt, 20},
      {"unidentified armed group", ActorGroup::NonState, std::nullopt, 20},
      {"insurgent", ActorGroup::NonState, std::nullopt, 22},
      {"bandits", ActorGroup::NonState, std::nullopt, 22},
      {"cult", ActorGroup::NonState, std::nullopt, 24},
      {"communal", ActorGroup::NonState, std::nullopt, 24},
      {"confraternity", ActorGroup::NonState, std::nullopt, 24},
      {"gunmen", ActorGroup::NonState, std::nullopt, 26},
  };
}

std::vector<ActorRule> load_actor_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open actor rules file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid actor rules JSON: " + std::string(e.what()));
  }
  std::vector<ActorRule> rules;
  for (const auto& item : j) {
    ActorRule r;
    r.pattern = item.at("pattern").get<std::string>();
    auto g = parse_actor_group(item.at("group").get<std::string>());
    if (!g) throw DataError("invalid actor group in rules file");
    r.group = *g;
    if (item.contains("country") && !item["country"].is_null())
      r.country_scope = item["country"].get<std::string>();
    if (item.contains("priority")) r.priority = item["priority"].get<int>();
    rules.push_back(std::move(r));
  }
  return rules;
}

ActorGroup normalize_actor(const std::string& actor_raw, const std::string& country,
                           const std::vector<ActorRule>& rules) {
  std::string hay = lower(actor_raw);
  // Stable sort keeps insertion order inside each priority band.
  std::vector<const ActorRule*> ordered;
  ordered.reserve(rules.size());
  for (const auto& r : rules) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const ActorRule* a, const ActorRule* b) {
                     return a->priority < b->priority;
                   });
  for (const ActorRule* r : ordered) {
    if (r->country_scope && lower(*r->country_scope) != lower(country)) continue;
    if (!r->pattern.empty() && hay.find(lower(r->pattern)) != std::string::npos)
      return r->group;
  }
  return ActorGroup::Other;
}

IngestResult ingest_corpus(const std::string& csv_path, const ColumnMap& columns,
                           const std::vector<ActorRule>& rules) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + csv_path);
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next_row(header)) throw DataError("empty corpus file: " + csv_path);

  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  auto require = [&](const std::string& name) {
    auto c = col(name);
    if (!c) throw DataError("missing required column: " + name);
    return *c;
  };

  std::size_t c_id = require(columns.event_id);
  std::size_t c_country = require(columns.country);
  std::size_t c_notes = require(columns.notes);
  std::size_t c_type = require(columns.event_type);
  std::size_t c_actor = require(columns.actor1);
  auto c_date = col(columns.event_date);  // optional: no metric consumes dates

  IngestResult result;
  std::unordered_set<std::string> seen;
  std::vector<std::string> row;
  auto cell = [&](std::size_t i) -> std::string {
    return i < row.size() ? row[i] : std::string{};
  };
  while (reader.next_row(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    std::string id = cell(c_id);
    if (!seen.insert(id).second) {
      ++result.stats.duplicates;
      continue;
    }
    std::string notes = cell(c_notes);
    if (notes.empty()) {
      ++result.stats.rejected_missing_notes;
      continue;
    }
    auto label = parse_label(cell(c_type));
    if (!label) {
      ++result.stats.rejected_invalid_label;
      continue;
    }
    EventRecord rec;
    rec.event_id = std::move(id);
    rec.country = cell(c_country);
    rec.notes = std::move(notes);
    rec.true_label = *label;
    rec.actor_raw = cell(c_actor);
    rec.actor_group = normalize_actor(rec.actor_raw, rec.country, rules);
    rec.notes_length = static_cast<int>(rec.notes.size());
    if (c_date) {
      std::string d = cell(*c_date);
      if (valid_iso_date(d)) rec.event_date = d;
    }
    result.records.push_back(std::move(rec));
    ++result.stats.accepted;
  }
  if (result.records.empty()) throw DataError("no valid records in corpus: " + csv_path);
  return result;
}

void write_corpus_jsonl(const std::string& path, const std::vector<EventRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["event_id"] = r.event_id;
    j["country"] = r.country;
    j["event_date"] = r.event_date ? nlohmann::ordered_json(*r.event_date)
                                   : nlohmann::ordered_json(nullptr);
    j["notes"] = r.notes;
    j["true_label"] = label_str(r.true_label);
    j["actor_raw"] = r.actor_raw;
    j["actor_group"] = actor_group_str(r.actor_group);
    j["notes_length"] = r.notes_length;
    out << j.dump() << "\n";
  }
}

IngestResult read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("invalid corpus line: " + std::string(e.what()));
    }
    EventRecord r;
    r.event_id = j.at("event_id").get<std::string>();
    if (!seen.insert(r.event_id).second) {
      ++result.stats.duplicates;
      continue;
    }
    r.country = j.value("country", "");
    if (j.contains("event_date") && !j["event_date"].is_null())
      r.event_date = j["event_date"].get<std::string>();
    r.notes = j.value("notes", "");
    if (r.notes.empty()) {
      ++result.stats.rejected_missing_notes;
      continue;
    }
    auto label = parse_label(j.value("true_label", ""));
    if (!label) {
      ++result.stats.rejected_invalid_label;
      continue;
    }
    r.true_label = *label;
    r.actor_raw = j.value("actor_raw", "");
    auto g = parse_actor_group(j.value("actor_group", "Other"));
    r.actor_group = g.value_or(ActorGroup::Other);
    r.notes_length = static_cast<int>(r.notes.size());
    result.records.push_back(std::move(r));
    ++result.stats.accepted;
  }
  if (result.records.empty()) throw DataError("no valid records in corpus: " + path);
  return result;
}

QualityScore default_quality_score() {
  return [](const EventRecord& e) {
    double score = static_cast<double>(e.notes_length);
    if (e.actor_group != ActorGroup::Other) score += 1000.0;
    return score;
  };
}

std::uint64_t corpus_digest(const std::vector<EventRecord>& records) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.event_id);
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& id : ids) {
    h = fnv1a(id, h);
    h = fnv1a("\x1f", h);
  }
  return h;
}

std::vector<EventRecord> stratified_sample(const std::vector<EventRecord>& corpus,
                                           std::int64_t n, std::uint64_t seed,
                                           const QualityScore& quality) {
  if (n > static_cast<std::int64_t>(corpus.size()))
    throw DataError("stratified_sample: n exceeds corpus size");
  if (n < 0) throw ConfigError("stratified_sample: negative n");

  struct Stratum {
    Label label;
    ActorGroup group;
    std::vector<std::size_t> members;
    std::int64_t floor_quota = 0;
    double remainder = 0.0;
    std::int64_t quota = 0;
  };
  std::map<std::pair<int, int>, Stratum> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto key = std::make_pair(static_cast<int>(corpus[i].true_label),
                              static_cast<int>(corpus[i].actor_group));
    auto& s = strata[key];
    s.label = corpus[i].true_label;
    s.group = corpus[i].actor_group;
    s.members.push_back(i);
  }

  const double total = static_cast<double>(corpus.size());
  std::vector<Stratum*> order;
  std::int64_t floor_sum = 0;
  for (auto& [key, s] : strata) {
    double exact = static_cast<double>(n) * static_cast<double>(s.members.size()) / total;
    s.floor_quota = static_cast<std::int64_t>(exact);
    s.remainder = exact - static_cast<double>(s.floor_quota);
    s.quota = s.floor_quota;
    floor_sum += s.floor_quota;
    order.push_back(&s);
  }

  auto group_total = [&](ActorGroup g) {
    std::int64_t t = 0;
    for (auto* s : order)
      if (s->group == g) t += s->quota;
    return t;
  };

  // Distribute the leftover slots by largest remainder; ties prefer the
  // State/NonState side currently behind, so balance emerges where feasible.
  std::int64_t extras = n - floor_sum;
  std::vector<Stratum*> candidates = order;
  while (extras > 0) {
    std::int64_t st = group_total(ActorGroup::State);
    std::int64_t ns = group_total(ActorGroup::NonState);
    ActorGroup prefer = st < ns ? ActorGroup::State
                       : ns < st ? ActorGroup::NonState
                                 : ActorGroup::Other;  // Other = no preference
    Stratum* best = nullptr;
    for (auto* s : candidates) {
      if (s->quota >= static_cast<std::int64_t>(s->members.size())) continue;
      if (s->quota > s->floor_quota) continue;  // keep |quota - exact| <= 1
      if (!best) {
        best = s;
        continue;
      }
      bool s_pref = prefer != ActorGroup::Other && s->group == prefer;
      bool b_pref = prefer != ActorGroup::Other && best->group == prefer;
      if (std::make_tuple(!s_pref, -s->remainder) <
          std::make_tuple(!b_pref, -best->remainder))
        best = s;
    }
    if (!best) break;  // all strata saturated
    ++best->quota;
    --extras;
  }
  // Spill any slots the +/-1 bound could not place (saturated strata).
  while (extras > 0) {
    Stratum* best = nullptr;
    for (auto* s : order) {
      if (s->quota >= static_cast<std::int64_t>(s->members.size())) continue;
      if (!best || s->remainder > best->remainder) best = s;
    }
    if (!best) break;
    ++best->quota;
    --extras;
  }

  // Final balance pass: move single slots between groups while every stratum
  // stays within one of its exact proportional quota.
  for (int guard = 0; guard < 1024; ++guard) {
    std::int64_t st = group_total(ActorGroup::State);
    std::int64_t ns = group_total(ActorGroup::NonState);
    if (std::llabs(st - ns) < 2) break;
    ActorGroup heavy = st > ns ? ActorGroup::State : ActorGroup::NonState;
    ActorGroup light = st > ns ? ActorGroup::NonState : ActorGroup::State;
    Stratum* donor = nullptr;
    Stratum* receiver = nullptr;
    for (auto* s : order) {
      if (s->group == heavy && s->quota > std::max<std::int64_t>(0, s->floor_quota) &&
          (!donor || s->quota > donor->quota))
        donor = s;
      if (s->group == light && s->quota < static_cast<std::int64_t>(s->members.size()) &&
          s->quota <= s->floor_quota && (!receiver || s->remainder > receiver->remainder))
        receiver = s;
    }
    if (!donor || !receiver) break;  // balance not feasible within bounds
    --donor->quota;
    ++receiver->quota;
  }

  Rng rng(seed);
  std::vector<EventRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (auto* s : order) {
    std::vector<std::size_t> members = s->members;
    rng.shuffle(members);
    if (quality) {
      std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        return quality(corpus[a]) > quality(corpus[b]);
      });
    }
    for (std::int64_t i = 0; i < s->quota && i < static_cast<std::int64_t>(members.size()); ++i)
      out.push_back(corpus[members[static_cast<std::size_t>(i)]]);
  }
  return out;
}

}  // namespace caudit::corpus
