#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "caudit/corpus.hpp"
#include "caudit/types.hpp"

namespace caudit::report {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct RunConfig {
  std::string country;
  std::vector<std::string> model_ids = {"mock-model"};
  Strategy strategy = Strategy::zero_shot;
  int examples_per_category = 3;  // few-shot shots knob
  std::string endpoint_url = "mock:";
  std::uint64_t seed = 0;
  bool seed_set = false;  // resampling stages refuse to run without a seed
  std::int64_t n_boot = 1000;
  std::int64_t n_perm = 1000;
  std::vector<double> thresholds = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
  std::vector<Label> positive_labels = {Label::V, Label::B};
  std::string corpus_path;
  std::string out_dir = "results";
  std::int64_t sample_n = 0;  // 0 = audit the full (filtered) corpus
  int parallelism = 4;
  int timeout_seconds = 60;
  int max_retries = 2;
  std::string actor_rules_path;        // empty = shipped defaults
  std::string perturbation_specs_path; // empty = shipped defaults
  std::string example_pool_path;       // empty = shipped few-shot pool
  bool calibration_split = false;      // 80/20 fit/eval split, seeded
  bool ambiguity_use_calibrated = false;  // isotonic-map confidences before EAS
  std::int64_t review_sample_n = 0;    // dump n (original, perturbed) pairs
  bool force = false;                  // overwrite conflicting fragments
  std::string timestamp;  // provenance; empty keeps reports byte-stable
};

// Store directory name for a strategy; few-shot runs are shot-qualified
// (few_shot_3) so different shot counts coexist in one store.
std::string store_strategy(const RunConfig& cfg);

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// Merge-safe fragment store rooted at <root>; fragment files live at
// <root>/<country>/<strategy>/<model>/<fragment>. Writing an existing
// fragment with different content moves the old bytes to <stem>.v<k>(.ext)
// unless force is set; the plain name always carries the latest version.
class AuditStore {
 public:
  explicit AuditStore(std::string root);

  const std::string& root() const { return root_; }

  std::filesystem::path fragment_path(const std::string& country,
                                      const std::string& strategy,
                                      const std::string& model,
                                      const std::string& fragment) const;

  bool has(const std::string& country, const std::string& strategy,
           const std::string& model, const std::string& fragment) const;

  void write_json(const std::string& country, const std::string& strategy,
                  const std::string& model, const std::string& fragment,
                  const nlohmann::ordered_json& payload, bool force = false);

  void write_text(const std::string& country, const std::string& strategy,
                  const std::string& model, const std::string& fragment,
                  const std::string& content, bool force = false);

  nlohmann::ordered_json read_json(const std::string& country, const std::string& strategy,
                                   const std::string& model,
                                   const std::string& fragment) const;

  std::string read_text(const std::string& country, const std::string& strategy,
                        const std::string& model, const std::string& fragment) const;

  // Relative fragment paths, sorted.
  std::vector<std::string> list() const;

 private:
  void place(const std::filesystem::path& path, const std::string& bytes, bool force);
  std::string root_;
};

// The pseudo-model directory holding cross-model fragments.
inline constexpr const char* kEnsembleModel = "_ensemble";

// Stages in order; run_pipeline executes them all, skipping fragments already
// produced under the same config hash (that hash is the resume token).
enum class Stage { infer, calibrate, metrics, fairness, legitbias, ambiguity,
                   perturb, errortrace, report };

std::string stage_str(Stage s);

struct PipelineResult {
  nlohmann::ordered_json report;
  std::filesystem::path report_path;
};

PipelineResult run_pipeline(const RunConfig& cfg);

// Individual stage entry points used by the CLI subcommands. Each reads its
// inputs from the store, so a resumed run replays identically.
void stage_infer(AuditStore& store, const RunConfig& cfg,
                 const std::vector<EventRecord>& events);
void stage_calibrate(AuditStore& store, const RunConfig& cfg);
void stage_metrics(AuditStore& store, const RunConfig& cfg,
                   const std::vector<EventRecord>& events);
void stage_fairness(AuditStore& store, const RunConfig& cfg,
                    const std::vector<EventRecord>& events);
void stage_legitbias(AuditStore& store, const RunConfig& cfg,
                     const std::vector<EventRecord>& events);
void stage_ambiguity(AuditStore& store, const RunConfig& cfg,
                     const std::vector<EventRecord>& events);
void stage_perturb(AuditStore& store, const RunConfig& cfg,
                   const std::vector<EventRecord>& events);
void stage_errortrace(AuditStore& store, const RunConfig& cfg);
nlohmann::ordered_json stage_report(AuditStore& store, const RunConfig& cfg);

std::vector<EventRecord> load_events(const RunConfig& cfg);

}  // namespace caudit::report
