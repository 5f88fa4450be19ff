#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "caudit/corpus.hpp"
#include "caudit/counterfact.hpp"
#include "caudit/data.hpp"
#include "caudit/report.hpp"
#include "caudit/rng.hpp"

using namespace caudit;
using namespace caudit::report;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("caudit_store_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<EventRecord> synthetic_corpus(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EventRecord> events;
  const char* templates[] = {
      "Military forces killed two villagers in Placename on Monday.",
      "Police arrested three protesters near the market.",
      "Rebel militia clashed with soldiers, several wounded.",
      "Teachers said they would march later against unpaid wages.",
      "An unidentified armed group shot and killed a trader in Townsville.",
      "A mob burned shops after a dispute; two injured."};
  for (int i = 0; i < n; ++i) {
    EventRecord e;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "SYN%05d", i);
    e.event_id = buf;
    e.country = "Testland";
    e.notes = templates[rng.next_below(6)];
    e.true_label = kLabels[rng.next_below(6)];
    e.actor_group = static_cast<ActorGroup>(rng.next_below(3));
    e.actor_raw = "actor";
    e.notes_length = static_cast<int>(e.notes.size());
    events.push_back(e);
  }
  return events;
}

RunConfig base_config(const fs::path& out, const fs::path& corpus) {
  RunConfig cfg;
  cfg.country = "Testland";
  cfg.model_ids = {"model-a", "model-b"};
  cfg.strategy = Strategy::explainable;
  cfg.endpoint_url = "mock-text:";
  cfg.seed = 7;
  cfg.seed_set = true;
  cfg.n_boot = 200;
  cfg.n_perm = 200;
  cfg.corpus_path = corpus.string();
  cfg.out_dir = out.string();
  cfg.parallelism = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("store write, version retention, and force overwrite") {
  TempDir dir;
  AuditStore store(dir.path.string());
  nlohmann::ordered_json a{{"value", 1}};
  nlohmann::ordered_json b{{"value", 2}};
  store.write_json("cm", "zero_shot", "m1", "frag.json", a);
  CHECK(store.has("cm", "zero_shot", "m1", "frag.json"));
  auto before = store.list();

  // Identical rewrite is a no-op.
  store.write_json("cm", "zero_shot", "m1", "frag.json", a);
  CHECK(store.list() == before);

  // Conflicting write without force retains the old version side by side.
  store.write_json("cm", "zero_shot", "m1", "frag.json", b);
  auto after = store.list();
  CHECK(after.size() == before.size() + 1);
  CHECK(store.read_json("cm", "zero_shot", "m1", "frag.json")["value"] == 2);
  CHECK(store.read_json("cm", "zero_shot", "m1", "frag.v1.json")["value"] == 1);

  // Listing is always a superset of the previous listing.
  for (const auto& key : before)
    CHECK(std::find(after.begin(), after.end(), key) != after.end());

  // Force overwrites in place.
  store.write_json("cm", "zero_shot", "m1", "frag.json", a, true);
  CHECK(store.read_json("cm", "zero_shot", "m1", "frag.json")["value"] == 1);
  CHECK(store.list().size() == after.size());

  // Hierarchy is exactly <country>/<strategy>/<model>/<fragment>.
  CHECK(store.fragment_path("cm", "zero_shot", "m1", "frag.json") ==
        dir.path / "cm" / "zero_shot" / "m1" / "frag.json");
}

TEST_CASE("merge of disjoint fragments is a union") {
  TempDir dir;
  AuditStore store(dir.path.string());
  store.write_json("cm", "zero_shot", "m1", "a.json", {{"x", 1}});
  store.write_json("ng", "few_shot", "m2", "b.json", {{"y", 2}});
  auto keys = store.list();
  CHECK(keys.size() == 2);
  CHECK(std::find(keys.begin(), keys.end(), "cm/zero_shot/m1/a.json") != keys.end());
  CHECK(std::find(keys.begin(), keys.end(), "ng/few_shot/m2/b.json") != keys.end());
}

TEST_CASE("config hash changes iff content changes") {
  RunConfig a;
  a.country = "Testland";
  RunConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = a.seed + 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.model_ids.push_back("extra");
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.timestamp = "2031-01-01";  // provenance text is not part of the hash
  CHECK(config_hash(a) == config_hash(b));
}

TEST_CASE("pipeline runs end to end on the mock endpoint") {
  TempDir dir;
  auto corpus_path = dir.path / "corpus.jsonl";
  corpus::write_corpus_jsonl(corpus_path.string(), synthetic_corpus(60, 5));
  auto cfg = base_config(dir.path / "results", corpus_path);
  auto result = run_pipeline(cfg);

  AuditStore store(cfg.out_dir);
  for (const char* frag : {"predictions.jsonl", "infer.json", "calibration.json",
                           "selective.json", "metrics.json", "fairness_V.json",
                           "fairness_B.json", "legitbias.json"}) {
    CHECK(store.has("Testland", "explainable", "model-a", frag));
    CHECK(store.has("Testland", "explainable", "model-b", frag));
  }
  for (const char* frag : {"disagreement.json", "ambiguity.json", "word_level.json",
                           "vulnerability.json", "clusters.json", "rfc.json",
                           "report.json", "outcomes.jsonl"}) {
    CHECK(store.has("Testland", "explainable", kEnsembleModel, frag));
  }
  // CSV mirrors exist for the table fragments.
  for (const char* frag : {"metrics_per_class.csv", "confusion.csv", "selective.csv",
                           "legitbias.csv"}) {
    CHECK(store.has("Testland", "explainable", "model-a", frag));
  }
  CHECK(result.report.contains("fragments"));
  CHECK(result.report["provenance"]["config_hash"] == config_hash(cfg));
}

TEST_CASE("pipeline resume equals the uninterrupted run") {
  TempDir dir;
  auto corpus_path = dir.path / "corpus.jsonl";
  corpus::write_corpus_jsonl(corpus_path.string(), synthetic_corpus(40, 9));

  // Uninterrupted reference run.
  auto cfg_full = base_config(dir.path / "full", corpus_path);
  run_pipeline(cfg_full);

  // Interrupted run: first two stages only, then resume through run_pipeline.
  auto cfg_part = base_config(dir.path / "part", corpus_path);
  {
    AuditStore store(cfg_part.out_dir);
    auto events = load_events(cfg_part);
    stage_infer(store, cfg_part, events);
    stage_calibrate(store, cfg_part);
  }
  run_pipeline(cfg_part);

  // The two stores agree byte for byte.
  AuditStore full(cfg_full.out_dir), part(cfg_part.out_dir);
  auto keys_full = full.list();
  auto keys_part = part.list();
  REQUIRE(keys_full == keys_part);
  for (const auto& key : keys_full) {
    CAPTURE(key);
    CHECK(slurp(fs::path(cfg_full.out_dir) / key) ==
          slurp(fs::path(cfg_part.out_dir) / key));
  }
}

TEST_CASE("invalid endpoint fails before any fragment mutation") {
  TempDir dir;
  auto corpus_path = dir.path / "corpus.jsonl";
  corpus::write_corpus_jsonl(corpus_path.string(), synthetic_corpus(10, 2));
  auto cfg = base_config(dir.path / "results", corpus_path);
  cfg.endpoint_url = "smoke-signal:";
  CHECK_THROWS_AS(run_pipeline(cfg), ConfigError);
  CHECK(!fs::exists(dir.path / "results" / "Testland"));
}

TEST_CASE("resampling stages demand a seed") {
  TempDir dir;
  auto corpus_path = dir.path / "corpus.jsonl";
  corpus::write_corpus_jsonl(corpus_path.string(), synthetic_corpus(20, 3));
  auto cfg = base_config(dir.path / "results", corpus_path);
  cfg.seed_set = false;
  CHECK_THROWS_AS(run_pipeline(cfg), ConfigError);
}

TEST_CASE("load_events filters by country and samples deterministically") {
  TempDir dir;
  auto events = synthetic_corpus(30, 4);
  for (int i = 0; i < 10; ++i) events[static_cast<std::size_t>(i)].country = "Elsewhere";
  auto corpus_path = dir.path / "corpus.jsonl";
  corpus::write_corpus_jsonl(corpus_path.string(), events);

  auto cfg = base_config(dir.path / "results", corpus_path);
  auto loaded = load_events(cfg);
  CHECK(loaded.size() == 20);
  for (const auto& e : loaded) CHECK(e.country == "Testland");

  cfg.sample_n = 8;
  auto sampled_a = load_events(cfg);
  auto sampled_b = load_events(cfg);
  REQUIRE(sampled_a.size() == 8);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(sampled_a[i].event_id == sampled_b[i].event_id);

  cfg.country = "Atlantis";
  CHECK_THROWS_AS(load_events(cfg), DataError);
}

TEST_CASE("shipped data files match the built-in defaults") {
  TempDir dir;
  caudit::dump_default_data(dir.path.string());
  for (const char* name : {"actor_rules.json", "perturbation_specs.json",
                           "ambiguity_lexicons.json", "example_pool.json"}) {
    fs::path shipped = fs::path(CAUDIT_SOURCE_DIR) / "data" / name;
    CAPTURE(name);
    REQUIRE(fs::exists(shipped));
    CHECK(slurp(dir.path / name) == slurp(shipped));
  }
  // Loaders accept the shipped files.
  auto rules = corpus::load_actor_rules((fs::path(CAUDIT_SOURCE_DIR) / "data" /
                                         "actor_rules.json").string());
  CHECK(!rules.empty());
  auto specs = caudit::counterfact::load_perturbation_specs(
      (fs::path(CAUDIT_SOURCE_DIR) / "data" / "perturbation_specs.json").string());
  CHECK(specs.size() == caudit::counterfact::default_perturbation_specs().size());
}

TEST_CASE("replay-driven pipeline reproduces the mock-driven fragments") {
  TempDir dir;
  auto corpus_path = dir.path / "corpus.jsonl";
  corpus::write_corpus_jsonl(corpus_path.string(), synthetic_corpus(30, 12));

  auto cfg_mock = base_config(dir.path / "live", corpus_path);
  cfg_mock.model_ids = {"m"};
  run_pipeline(cfg_mock);

  // The stored predictions now act as the model.
  auto replay_file = dir.path / "dump.jsonl";
  fs::copy_file(dir.path / "live" / "Testland" / "explainable" / "m" /
                    "predictions.jsonl",
                replay_file);
  auto cfg_replay = base_config(dir.path / "replayed", corpus_path);
  cfg_replay.model_ids = {"m"};
  cfg_replay.endpoint_url = "replay:" + replay_file.string();
  run_pipeline(cfg_replay);

  // Stages fed purely by stored predictions agree byte for byte. The
  // endpoint string participates in the config hash, so compare payloads
  // with provenance stripped.
  for (const char* frag : {"predictions.jsonl"}) {
    CHECK(slurp(dir.path / "live" / "Testland" / "explainable" / "m" / frag) ==
          slurp(dir.path / "replayed" / "Testland" / "explainable" / "m" / frag));
  }
  for (const char* frag : {"metrics.json", "calibration.json", "legitbias.json"}) {
    auto strip = [&](const fs::path& root) {
      auto j = nlohmann::ordered_json::parse(
          slurp(root / "Testland" / "explainable" / "m" / frag));
      j.erase("provenance");
      return j.dump();
    };
    CAPTURE(frag);
    CHECK(strip(dir.path / "live") == strip(dir.path / "replayed"));
  }

  // Perturbed variants have no replay entries: they are excluded and counted,
  // never silently invented.
  auto word = AuditStore((dir.path / "replayed").string())
                  .read_json("Testland", "explainable", kEnsembleModel,
                             "word_level.json");
  CHECK(word.value("excluded_failures", std::int64_t{0}) > 0);
}
