#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caudit/types.hpp"

namespace caudit::corpus {

struct ActorRule {
  std::string pattern;  // case-insensitive substring
  ActorGroup group = ActorGroup::Other;
  std::optional<std::string> country_scope;
  int priority = 100;  // lower wins; insertion order breaks ties
};

// Rule set seeded from the canonical State / Non-State heuristics; a user
// rules file (JSON array of {pattern, group, country?, priority?}) overrides.
std::vector<ActorRule> default_actor_rules();
std::vector<ActorRule> load_actor_rules(const std::string& path);

ActorGroup normalize_actor(const std::string& actor_raw, const std::string& country,
                           const std::vector<ActorRule>& rules);

// CSV column names vary by export vintage; remap as needed.
struct ColumnMap {
  std::string event_id = "event_id";
  std::string country = "country";
  std::string event_date = "event_date";
  std::string notes = "notes";
  std::string event_type = "event_type";
  std::string actor1 = "actor1";
};

struct IngestStats {
  std::int64_t accepted = 0;
  std::int64_t duplicates = 0;
  std::int64_t rejected_missing_notes = 0;
  std::int64_t rejected_invalid_label = 0;
};

struct IngestResult {
  std::vector<EventRecord> records;
  IngestStats stats;
};

IngestResult ingest_corpus(const std::string& csv_path,
                           const ColumnMap& columns = {},
                           const std::vector<ActorRule>& rules = default_actor_rules());

// Canonical corpus format: one JSON object per line, EventRecord field names.
void write_corpus_jsonl(const std::string& path, const std::vector<EventRecord>& records);
IngestResult read_corpus_jsonl(const std::string& path);

using QualityScore = std::function<double(const EventRecord&)>;

// Stratified over (true_label x actor_group) with largest-remainder quotas,
// nudged toward equal State / NonState totals where the +/-1-per-stratum
// bound allows. With a quality score, each stratum keeps its top-scored
// records (seeded shuffle breaks ties); otherwise selection is a seeded draw.
std::vector<EventRecord> stratified_sample(const std::vector<EventRecord>& corpus,
                                           std::int64_t n, std::uint64_t seed,
                                           const QualityScore& quality = nullptr);

// The flagged-guess curation score for prompt-pool selection: description
// length, with a bonus for an identifiable (non-Other) actor.
QualityScore default_quality_score();

std::uint64_t corpus_digest(const std::vector<EventRecord>& records);

}  // namespace caudit::corpus
