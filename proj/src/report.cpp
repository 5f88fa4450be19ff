#include "caudit/report.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "caudit/ambiguity.hpp"
#include "caudit/calibrate.hpp"
#include "caudit/counterfact.hpp"
#include "caudit/errortrace.hpp"
#include "caudit/fairness.hpp"
#include "caudit/legitbias.hpp"
#include "caudit/metrics.hpp"
#include "caudit/modelgate.hpp"
#include "caudit/rng.hpp"
#include "caudit/stats.hpp"

namespace caudit::report {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

ordered_json rate_json(const stats::RateEstimate& r) {
  return ordered_json{{"successes", r.successes},
                      {"trials", r.trials},
                      {"rate", r.rate},
                      {"ci_low", r.ci_low},
                      {"ci_high", r.ci_high},
                      {"method", r.method == stats::IntervalMethod::wilson
                                     ? "wilson"
                                     : "clopper_pearson"},
                      {"level", r.level}};
}

std::string test_method_str(stats::TestMethod m) {
  switch (m) {
    case stats::TestMethod::two_prop_z: return "two_prop_z";
    case stats::TestMethod::chi_square: return "chi_square";
    case stats::TestMethod::fisher_exact: return "fisher_exact";
    case stats::TestMethod::permutation: return "permutation";
  }
  return "";
}

ordered_json test_json(const stats::TestResult& t) {
  ordered_json j{{"statistic", t.statistic},
                 {"p_value", t.p_value},
                 {"method", test_method_str(t.method)},
                 {"sides", "two_tailed"},
                 {"degenerate", t.degenerate}};
  if (t.n_resamples) j["n_resamples"] = *t.n_resamples;
  return j;
}

std::uint64_t stage_seed(const RunConfig& cfg, const std::string& tag) {
  return cfg.seed ^ fnv1a(tag);
}

void require_seed(const RunConfig& cfg, const char* stage) {
  if (!cfg.seed_set)
    throw ConfigError(std::string("a --seed is required for the ") + stage + " stage");
}

}  // namespace

// Canonical analysis-relevant configuration: storage and input paths stay
// out so that two runs over the same data produce byte-identical fragments
// wherever they are written. Corpus identity is guarded separately by a
// content digest recorded at the infer stage.
ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["country"] = cfg.country;
  j["model_ids"] = cfg.model_ids;
  j["strategy"] = strategy_str(cfg.strategy);
  j["examples_per_category"] = cfg.examples_per_category;
  j["endpoint_url"] = cfg.endpoint_url;
  j["seed"] = cfg.seed;
  j["n_boot"] = cfg.n_boot;
  j["n_perm"] = cfg.n_perm;
  j["thresholds"] = cfg.thresholds;
  ordered_json labels = ordered_json::array();
  for (Label l : cfg.positive_labels) labels.push_back(label_str(l));
  j["positive_labels"] = labels;
  j["sample_n"] = cfg.sample_n;
  j["timeout_seconds"] = cfg.timeout_seconds;
  j["max_retries"] = cfg.max_retries;
  j["calibration_split"] = cfg.calibration_split;
  j["ambiguity_use_calibrated"] = cfg.ambiguity_use_calibrated;
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  return hex64(fnv1a(config_to_json(cfg).dump()));
}

std::string store_strategy(const RunConfig& cfg) {
  if (cfg.strategy == Strategy::few_shot)
    return "few_shot_" + std::to_string(cfg.examples_per_category);
  return strategy_str(cfg.strategy);
}

AuditStore::AuditStore(std::string root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path AuditStore::fragment_path(const std::string& country, const std::string& strategy,
                                   const std::string& model,
                                   const std::string& fragment) const {
  return fs::path(root_) / country / strategy / model / fragment;
}

bool AuditStore::has(const std::string& country, const std::string& strategy,
                     const std::string& model, const std::string& fragment) const {
  return fs::exists(fragment_path(country, strategy, model, fragment));
}

void AuditStore::place(const fs::path& path, const std::string& bytes, bool force) {
  fs::create_directories(path.parent_path());
  if (fs::exists(path) && !force) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream existing;
    existing << in.rdbuf();
    if (existing.str() == bytes) return;  // idempotent rewrite
    // Retain the previous version side by side; the plain name stays latest.
    int version = 1;
    fs::path versioned;
    do {
      versioned = path.parent_path() / (path.stem().string() + ".v" +
                                        std::to_string(version) +
                                        path.extension().string());
      ++version;
    } while (fs::exists(versioned));
    fs::rename(path, versioned);
  }
  fs::path tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write fragment: " + path.string());
    out << bytes;
  }
  fs::rename(tmp, path);
}

void AuditStore::write_json(const std::string& country, const std::string& strategy,
                            const std::string& model, const std::string& fragment,
                            const ordered_json& payload, bool force) {
  place(fragment_path(country, strategy, model, fragment), payload.dump(2) + "\n", force);
}

void AuditStore::write_text(const std::string& country, const std::string& strategy,
                            const std::string& model, const std::string& fragment,
                            const std::string& content, bool force) {
  place(fragment_path(country, strategy, model, fragment), content, force);
}

ordered_json AuditStore::read_json(const std::string& country, const std::string& strategy,
                                   const std::string& model,
                                   const std::string& fragment) const {
  auto path = fragment_path(country, strategy, model, fragment);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing fragment: " + path.string());
  ordered_json j;
  in >> j;
  return j;
}

std::string AuditStore::read_text(const std::string& country, const std::string& strategy,
                                  const std::string& model,
                                  const std::string& fragment) const {
  auto path = fragment_path(country, strategy, model, fragment);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing fragment: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> AuditStore::list() const {
  std::vector<std::string> out;
  if (!fs::exists(root_)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    out.push_back(fs::relative(entry.path(), root_).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string stage_str(Stage s) {
  switch (s) {
    case Stage::infer: return "infer";
    case Stage::calibrate: return "calibrate";
    case Stage::metrics: return "metrics";
    case Stage::fairness: return "fairness";
    case Stage::legitbias: return "legitbias";
    case Stage::ambiguity: return "ambiguity";
    case Stage::perturb: return "perturb";
    case Stage::errortrace: return "errortrace";
    case Stage::report: return "report";
  }
  return "";
}

namespace {

ordered_json provenance(const RunConfig& cfg) {
  return ordered_json{{"config_hash", config_hash(cfg)},
                      {"toolkit_version", kToolkitVersion},
                      {"timestamp", cfg.timestamp}};
}

bool fragment_current(const AuditStore& store, const RunConfig& cfg,
                      const std::string& model, const std::string& fragment) {
  if (!store.has(cfg.country, store_strategy(cfg), model, fragment)) return false;
  auto j = store.read_json(cfg.country, store_strategy(cfg), model, fragment);
  return j.contains("provenance") &&
         j["provenance"].value("config_hash", "") == config_hash(cfg);
}

std::map<std::string, Label> gold_map(const std::vector<EventRecord>& events) {
  std::map<std::string, Label> m;
  for (const auto& e : events) m[e.event_id] = e.true_label;
  return m;
}

std::map<std::string, ActorGroup> group_map(const std::vector<EventRecord>& events) {
  std::map<std::string, ActorGroup> m;
  for (const auto& e : events) m[e.event_id] = e.actor_group;
  return m;
}

void put_json(AuditStore& store, const RunConfig& cfg, const std::string& model,
              const std::string& fragment, const ordered_json& payload) {
  store.write_json(cfg.country, store_strategy(cfg), model, fragment, payload,
                   cfg.force);
}

std::map<std::string, int> length_map(const std::vector<EventRecord>& events) {
  std::map<std::string, int> m;
  for (const auto& e : events) m[e.event_id] = e.notes_length;
  return m;
}

modelgate::EndpointConfig endpoint_for(const RunConfig& cfg, const std::string& model) {
  modelgate::EndpointConfig e;
  e.url = cfg.endpoint_url;
  e.model = model;
  e.timeout_seconds = cfg.timeout_seconds;
  e.max_retries = cfg.max_retries;
  return e;
}

modelgate::StrategyConfig strategy_for(const RunConfig& cfg) {
  modelgate::StrategyConfig s;
  s.strategy = cfg.strategy;
  s.examples_per_category = cfg.examples_per_category;
  if (!cfg.example_pool_path.empty())
    s.example_pool = modelgate::load_example_pool(cfg.example_pool_path);
  return s;
}

std::vector<Prediction> load_predictions(const AuditStore& store, const RunConfig& cfg,
                                         const std::string& model) {
  std::string text =
      store.read_text(cfg.country, store_strategy(cfg), model, "predictions.jsonl");
  std::vector<Prediction> preds;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    preds.push_back(modelgate::prediction_from_json(nlohmann::json::parse(line)));
  }
  return preds;
}

void write_csv_fragment(AuditStore& store, const RunConfig& cfg, const std::string& model,
                        const std::string& name, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ",";
    out += csv_escape(header[i]);
  }
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += csv_escape(row[i]);
    }
    out += "\n";
  }
  store.write_text(cfg.country, store_strategy(cfg), model, name, out, true);
}

}  // namespace

std::vector<EventRecord> load_events(const RunConfig& cfg) {
  if (cfg.corpus_path.empty()) throw ConfigError("no corpus path configured");
  corpus::IngestResult ingest;
  if (cfg.corpus_path.size() > 4 &&
      cfg.corpus_path.substr(cfg.corpus_path.size() - 4) == ".csv") {
    auto rules = cfg.actor_rules_path.empty()
                     ? corpus::default_actor_rules()
                     : corpus::load_actor_rules(cfg.actor_rules_path);
    ingest = corpus::ingest_corpus(cfg.corpus_path, {}, rules);
  } else {
    ingest = corpus::read_corpus_jsonl(cfg.corpus_path);
  }
  std::vector<EventRecord> events;
  for (auto& e : ingest.records) {
    if (!cfg.country.empty() && e.country != cfg.country) continue;
    events.push_back(std::move(e));
  }
  if (events.empty()) throw DataError("no events for country " + cfg.country);
  if (cfg.sample_n > 0) {
    require_seed(cfg, "sampling");
    events = corpus::stratified_sample(events, cfg.sample_n, stage_seed(cfg, "sample"));
  }
  std::sort(events.begin(), events.end(),
            [](const EventRecord& a, const EventRecord& b) { return a.event_id < b.event_id; });
  return events;
}

void stage_infer(AuditStore& store, const RunConfig& cfg,
                 const std::vector<EventRecord>& events) {
  std::string digest = hex64(corpus::corpus_digest(events));
  for (const auto& model : cfg.model_ids) {
    if (fragment_current(store, cfg, model, "infer.json")) {
      auto meta = store.read_json(cfg.country, store_strategy(cfg), model,
                                  "infer.json");
      if (meta.value("corpus_digest", "") != digest)
        throw DataError(
            "store holds predictions for a different corpus; use a fresh --out "
            "directory or remove " +
            store.fragment_path(cfg.country, store_strategy(cfg), model,
                                "infer.json")
                .string());
      continue;
    }
    auto batch =
        modelgate::classify_batch(events, strategy_for(cfg), endpoint_for(cfg, model),
                                  cfg.parallelism);
    if (batch.predictions.empty()) {
      bool all_transport = !batch.failures.empty();
      for (const auto& f : batch.failures) all_transport = all_transport && f.transport;
      if (all_transport)
        throw EndpointError("endpoint unreachable for model " + model);
      throw DataError("no prediction parsed for model " + model);
    }
    std::string jsonl;
    for (const auto& p : batch.predictions)
      jsonl += modelgate::prediction_to_json(p).dump() + "\n";
    store.write_text(cfg.country, store_strategy(cfg), model, "predictions.jsonl",
                     jsonl, cfg.force);
    ordered_json failures = ordered_json::array();
    for (const auto& f : batch.failures)
      failures.push_back(ordered_json{{"event_id", f.event_id},
                                      {"reason", f.reason},
                                      {"transport", f.transport},
                                      {"raw_response", f.raw_response}});
    ordered_json meta;
    meta["provenance"] = provenance(cfg);
    meta["corpus_digest"] = digest;
    meta["n_events"] = events.size();
    meta["n_predictions"] = batch.predictions.size();
    meta["n_failures"] = batch.failures.size();
    meta["failures"] = failures;
    put_json(store, cfg, model, "infer.json", meta);
  }
}

void stage_calibrate(AuditStore& store, const RunConfig& cfg) {
  auto events = load_events(cfg);
  auto gold = gold_map(events);
  for (const auto& model : cfg.model_ids) {
    if (fragment_current(store, cfg, model, "calibration.json")) continue;
    auto preds = load_predictions(store, cfg, model);

    std::vector<std::size_t> fit_idx, eval_idx;
    for (std::size_t i = 0; i < preds.size(); ++i) fit_idx.push_back(i);
    eval_idx = fit_idx;
    if (cfg.calibration_split) {
      require_seed(cfg, "calibration split");
      Rng rng(stage_seed(cfg, "calsplit:" + model));
      rng.shuffle(fit_idx);
      std::size_t cut = fit_idx.size() * 8 / 10;
      eval_idx.assign(fit_idx.begin() + static_cast<std::ptrdiff_t>(cut), fit_idx.end());
      fit_idx.resize(cut);
      if (eval_idx.empty()) eval_idx = fit_idx;
    }

    auto correctness = [&](const Prediction& p) {
      return p.label == gold.at(p.event_id) ? 1 : 0;
    };
    std::vector<std::pair<double, double>> fit_pairs;
    std::vector<LabelDist> fit_dists;
    std::vector<Label> fit_gold;
    for (auto i : fit_idx) {
      fit_pairs.emplace_back(preds[i].confidence, correctness(preds[i]));
      fit_dists.push_back(preds[i].logits);
      fit_gold.push_back(gold.at(preds[i].event_id));
    }
    auto iso = calibrate::fit_isotonic(fit_pairs);
    auto temp = calibrate::fit_temperature(fit_dists, fit_gold);

    std::vector<double> raw_conf, iso_conf, temp_conf;
    std::vector<int> outcomes;
    for (auto i : eval_idx) {
      raw_conf.push_back(preds[i].confidence);
      iso_conf.push_back(iso.apply(preds[i].confidence));
      auto scaled = temp.map.apply(preds[i].logits);
      temp_conf.push_back(*std::max_element(scaled.begin(), scaled.end()));
      outcomes.push_back(correctness(preds[i]));
    }
    double brier_raw = calibrate::brier(raw_conf, outcomes);
    double brier_iso = calibrate::brier(iso_conf, outcomes);
    double brier_temp = calibrate::brier(temp_conf, outcomes);

    ordered_json frag;
    frag["provenance"] = provenance(cfg);
    frag["model"] = model;
    frag["brier_raw"] = brier_raw;
    frag["brier_isotonic"] = brier_iso;
    frag["brier_temperature"] = brier_temp;
    frag["brier_reduction_isotonic_pct"] =
        brier_raw > 0.0 ? (1.0 - brier_iso / brier_raw) * 100.0 : 0.0;
    frag["temperature"] = temp.map.temperature;
    frag["temperature_nll"] = temp.nll;
    frag["temperature_degenerate_at_bound"] = temp.degenerate_at_bound;
    frag["floored_zero_probabilities"] = temp.floored_zeros;
    frag["calibration_split"] = cfg.calibration_split;
    ordered_json steps = ordered_json::array();
    for (const auto& [x, y] : iso.steps) steps.push_back(ordered_json{{"x", x}, {"y", y}});
    frag["isotonic_steps"] = steps;
    put_json(store, cfg, model, "calibration.json", frag);

    ordered_json sel;
    sel["provenance"] = provenance(cfg);
    std::vector<std::vector<std::string>> csv_rows;
    for (auto [name, confs] : std::initializer_list<std::pair<const char*, std::vector<double>*>>{
             {"raw", &raw_conf}, {"isotonic", &iso_conf}, {"temperature", &temp_conf}}) {
      auto curve = calibrate::selective_curve(*confs, outcomes, cfg.thresholds);
      ordered_json pts = ordered_json::array();
      for (const auto& p : curve) {
        pts.push_back(ordered_json{{"tau", p.tau},
                                   {"coverage", p.coverage},
                                   {"accuracy", p.accuracy ? ordered_json(*p.accuracy)
                                                           : ordered_json(nullptr)}});
        csv_rows.push_back({name, fmt(p.tau), fmt(p.coverage),
                            p.accuracy ? fmt(*p.accuracy) : ""});
      }
      sel[name] = pts;
    }
    put_json(store, cfg, model, "selective.json", sel);
    write_csv_fragment(store, cfg, model, "selective.csv",
                       {"method", "tau", "coverage", "accuracy"}, csv_rows);
  }
}

void stage_metrics(AuditStore& store, const RunConfig& cfg,
                   const std::vector<EventRecord>& events) {
  auto gold = gold_map(events);
  auto lengths = length_map(events);
  std::vector<Prediction> all_preds;
  for (const auto& model : cfg.model_ids) {
    auto preds = load_predictions(store, cfg, model);
    all_preds.insert(all_preds.end(), preds.begin(), preds.end());
    if (fragment_current(store, cfg, model, "metrics.json")) continue;
    auto report = metrics::score(preds, gold);
    auto length_analysis = metrics::length_slice_analysis(preds, gold, lengths);

    ordered_json frag;
    frag["provenance"] = provenance(cfg);
    frag["model"] = model;
    frag["accuracy"] = report.accuracy;
    frag["macro_precision"] = report.macro_precision;
    frag["macro_recall"] = report.macro_recall;
    frag["macro_f1"] = report.macro_f1;
    frag["total"] = report.total;
    ordered_json per_class;
    std::vector<std::vector<std::string>> class_rows;
    for (int k = 0; k < 6; ++k) {
      const auto& m = report.per_class[k];
      std::string code = label_str(kLabels[k]);
      per_class[code] = ordered_json{{"precision", m.precision},
                                     {"recall", m.recall},
                                     {"f1", m.f1},
                                     {"support", m.support},
                                     {"zero_division", m.zero_division}};
      class_rows.push_back({code, fmt(m.precision), fmt(m.recall), fmt(m.f1),
                            std::to_string(m.support)});
    }
    frag["per_class"] = per_class;
    ordered_json confusion = ordered_json::array();
    for (int i = 0; i < 6; ++i) {
      ordered_json row = ordered_json::array();
      for (int j = 0; j < 6; ++j) row.push_back(report.confusion.counts[i][j]);
      confusion.push_back(row);
    }
    frag["confusion"] = confusion;
    ordered_json slices = ordered_json::array();
    for (const auto& s : length_analysis.slices) {
      slices.push_back(ordered_json{
          {"lower", s.lower},
          {"upper", std::isinf(s.upper) ? ordered_json(nullptr) : ordered_json(s.upper)},
          {"n", s.n},
          {"errors", s.errors},
          {"delta_eps", s.delta_eps ? ordered_json(*s.delta_eps) : ordered_json(nullptr)}});
    }
    frag["length_slices"] = slices;
    frag["length_spearman_rho"] = length_analysis.spearman_rho
                                      ? ordered_json(*length_analysis.spearman_rho)
                                      : ordered_json(nullptr);
    frag["overall_error"] = length_analysis.overall_error;
    put_json(store, cfg, model, "metrics.json", frag);
    write_csv_fragment(store, cfg, model, "metrics_per_class.csv",
                       {"label", "precision", "recall", "f1", "support"}, class_rows);

    std::vector<std::vector<std::string>> conf_rows;
    for (int i = 0; i < 6; ++i) {
      std::vector<std::string> row{label_str(kLabels[i])};
      for (int j = 0; j < 6; ++j)
        row.push_back(std::to_string(report.confusion.counts[i][j]));
      conf_rows.push_back(row);
    }
    write_csv_fragment(store, cfg, model, "confusion.csv",
                       {"true\\pred", "V", "B", "E", "P", "R", "S"}, conf_rows);
  }

  if (cfg.model_ids.size() >= 2 &&
      !fragment_current(store, cfg, kEnsembleModel, "disagreement.json")) {
    auto table = metrics::disagreement_table(all_preds);
    ordered_json frag;
    frag["provenance"] = provenance(cfg);
    ordered_json rows = ordered_json::array();
    std::vector<std::vector<std::string>> csv_rows;
    for (const auto& r : table) {
      ordered_json labels;
      for (const auto& [model, label] : r.model_labels) labels[model] = label_str(label);
      rows.push_back(ordered_json{{"event_id", r.event_id},
                                  {"labels", labels},
                                  {"majority_label", label_str(r.majority_label)},
                                  {"d", r.d},
                                  {"max_conf", r.max_conf},
                                  {"tie", r.tie}});
      csv_rows.push_back({r.event_id, label_str(r.majority_label), std::to_string(r.d),
                          fmt(r.max_conf), r.tie ? "1" : "0"});
    }
    frag["rows"] = rows;
    put_json(store, cfg, kEnsembleModel, "disagreement.json", frag);
    write_csv_fragment(store, cfg, kEnsembleModel, "disagreement.csv",
                       {"event_id", "majority_label", "D", "max_conf", "tie"}, csv_rows);
  }
}

void stage_fairness(AuditStore& store, const RunConfig& cfg,
                    const std::vector<EventRecord>& events) {
  require_seed(cfg, "fairness");
  auto gold = gold_map(events);
  auto groups = group_map(events);
  for (const auto& model : cfg.model_ids) {
    auto preds = load_predictions(store, cfg, model);
    for (Label positive : cfg.positive_labels) {
      std::string frag_name = "fairness_" + label_str(positive) + ".json";
      if (fragment_current(store, cfg, model, frag_name)) continue;
      auto rep = fairness::audit_fairness(
          preds, gold, groups, positive, cfg.n_boot, cfg.n_perm,
          stage_seed(cfg, "fairness:" + model + ":" + label_str(positive)));
      ordered_json frag;
      frag["provenance"] = provenance(cfg);
      frag["model"] = model;
      frag["positive_label"] = label_str(positive);
      frag["group_a"] = actor_group_str(rep.group_a);
      frag["group_b"] = actor_group_str(rep.group_b);
      frag["spd"] = rep.spd;
      frag["spd_ci"] = {rep.spd_ci.first, rep.spd_ci.second};
      frag["d_tpr"] = rep.d_tpr ? ordered_json(*rep.d_tpr) : ordered_json(nullptr);
      frag["d_fpr"] = rep.d_fpr ? ordered_json(*rep.d_fpr) : ordered_json(nullptr);
      frag["p_tpr"] = rep.p_tpr ? ordered_json(*rep.p_tpr) : ordered_json(nullptr);
      frag["p_fpr"] = rep.p_fpr ? ordered_json(*rep.p_fpr) : ordered_json(nullptr);
      auto counts = [&](const fairness::GroupCounts& c) {
        return ordered_json{{"n", c.n},
                            {"predicted_positive", c.predicted_positive},
                            {"tp", c.tp},
                            {"fp", c.fp},
                            {"fn", c.fn},
                            {"tn", c.tn}};
      };
      frag["counts_state"] = counts(rep.counts_a);
      frag["counts_nonstate"] = counts(rep.counts_b);
      frag["excluded_other"] = rep.excluded_other;
      store.write_json(cfg.country, store_strategy(cfg), model, frag_name, frag,
                       cfg.force);
      write_csv_fragment(
          store, cfg, model, "fairness_" + label_str(positive) + ".csv",
          {"model", "positive_label", "spd", "spd_ci_low", "spd_ci_high", "d_tpr",
           "p_tpr", "d_fpr", "p_fpr"},
          {{model, label_str(positive), fmt(rep.spd), fmt(rep.spd_ci.first),
            fmt(rep.spd_ci.second), rep.d_tpr ? fmt(*rep.d_tpr) : "",
            rep.p_tpr ? fmt(*rep.p_tpr) : "", rep.d_fpr ? fmt(*rep.d_fpr) : "",
            rep.p_fpr ? fmt(*rep.p_fpr) : ""}});
    }
  }
}

void stage_legitbias(AuditStore& store, const RunConfig& cfg,
                     const std::vector<EventRecord>& events) {
  auto gold = gold_map(events);
  std::uint64_t digest = corpus::corpus_digest(events);
  for (const auto& model : cfg.model_ids) {
    if (fragment_current(store, cfg, model, "legitbias.json")) continue;
    auto preds = load_predictions(store, cfg, model);
    auto counts = legitbias::count_legitimization_errors(preds, gold);
    auto rep = legitbias::legitimization_report(
        counts, 0.95, model,
        cfg.strategy == Strategy::few_shot ? cfg.examples_per_category : 0);
    rep.corpus_digest = digest;
    ordered_json frag;
    frag["provenance"] = provenance(cfg);
    frag["model"] = model;
    frag["shots"] = rep.shots;
    frag["n_fl"] = counts.n_fl;
    frag["n_fi"] = counts.n_fi;
    frag["n_v"] = counts.n_v;
    frag["n_b"] = counts.n_b;
    frag["eps_fl"] = rate_json(rep.eps_fl);
    frag["eps_fi"] = rate_json(rep.eps_fi);
    frag["delta_lb_pp"] = rep.delta_lb_pp;
    frag["p"] = test_json(rep.p);
    frag["corpus_digest"] = hex64(digest);
    put_json(store, cfg, model, "legitbias.json", frag);
    write_csv_fragment(
        store, cfg, model, "legitbias.csv",
        {"model", "shots", "n_fl", "eps_fl_pct", "fl_ci_low_pct", "fl_ci_high_pct",
         "n_fi", "eps_fi_pct", "fi_ci_low_pct", "fi_ci_high_pct", "delta_lb_pp", "p"},
        {{model, std::to_string(rep.shots), std::to_string(counts.n_fl),
          fmt(rep.eps_fl.rate * 100), fmt(rep.eps_fl.ci_low * 100),
          fmt(rep.eps_fl.ci_high * 100), std::to_string(counts.n_fi),
          fmt(rep.eps_fi.rate * 100), fmt(rep.eps_fi.ci_low * 100),
          fmt(rep.eps_fi.ci_high * 100), fmt(rep.delta_lb_pp), fmt(rep.p.p_value)}});
  }
}

void stage_ambiguity(AuditStore& store, const RunConfig& cfg,
                     const std::vector<EventRecord>& events) {
  if (fragment_current(store, cfg, kEnsembleModel, "ambiguity.json")) return;
  ordered_json frag;
  frag["provenance"] = provenance(cfg);
  if (cfg.model_ids.size() < 2) {
    frag["degenerate"] = true;
    frag["note"] = "event ambiguity scoring needs predictions from >= 2 models";
    put_json(store, cfg, kEnsembleModel, "ambiguity.json", frag);
    return;
  }
  std::map<std::string, std::vector<Prediction>> by_event;
  for (const auto& model : cfg.model_ids) {
    auto preds = load_predictions(store, cfg, model);
    if (cfg.ambiguity_use_calibrated) {
      auto cal = store.read_json(cfg.country, store_strategy(cfg), model,
                                 "calibration.json");
      calibrate::IsotonicMap map;
      for (const auto& step : cal.at("isotonic_steps"))
        map.steps.emplace_back(step.at("x").get<double>(), step.at("y").get<double>());
      for (auto& p : preds) p.confidence = map.apply(p.confidence);
    }
    for (auto& p : preds) by_event[p.event_id].push_back(p);
  }

  std::map<std::string, ambiguity::AmbiguityScore> scores;
  std::map<std::string, const EventRecord*> by_id;
  for (const auto& e : events) by_id[e.event_id] = &e;
  for (const auto& [event_id, preds] : by_event) {
    if (preds.size() < 2) continue;
    auto it = by_id.find(event_id);
    if (it == by_id.end()) continue;
    scores[event_id] = ambiguity::score_event(preds, it->second->notes);
  }
  auto gate = ambiguity::gate_low_ambiguity(scores);

  frag["degenerate"] = false;
  frag["use_calibrated_confidence"] = cfg.ambiguity_use_calibrated;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& [event_id, s] : scores) {
    rows.push_back(ordered_json{{"event_id", event_id},
                                {"label_entropy", s.label_entropy},
                                {"confidence_uncertainty", s.confidence_uncertainty},
                                {"confidence_dispersion", s.confidence_dispersion},
                                {"text_ambiguity", s.text_ambiguity},
                                {"total", s.total},
                                {"tier", ambiguity::tier_str(s.tier)}});
    csv_rows.push_back({event_id, fmt(s.label_entropy), fmt(s.confidence_uncertainty),
                        fmt(s.confidence_dispersion), fmt(s.text_ambiguity), fmt(s.total),
                        ambiguity::tier_str(s.tier)});
  }
  frag["rows"] = rows;
  ordered_json hist;
  for (const auto& [tier, count] : gate.tier_histogram) hist[tier] = count;
  frag["tier_histogram"] = hist;
  ordered_json gate_ids = ordered_json::array();
  for (const auto& id : gate.low_ambiguity_ids) gate_ids.push_back(id);
  frag["low_ambiguity_event_ids"] = gate_ids;
  put_json(store, cfg, kEnsembleModel, "ambiguity.json", frag);
  write_csv_fragment(store, cfg, kEnsembleModel, "ambiguity.csv",
                     {"event_id", "label_entropy", "confidence_uncertainty",
                      "confidence_dispersion", "text_ambiguity", "total", "tier"},
                     csv_rows);
}

namespace {

std::vector<counterfact::PerturbationOutcome> outcomes_from_jsonl(const std::string& text) {
  std::vector<counterfact::PerturbationOutcome> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    counterfact::PerturbationOutcome o;
    o.event_id = j.at("event_id").get<std::string>();
    o.spec_id = j.at("spec_id").get<std::string>();
    o.family = counterfact::parse_family(j.at("family").get<std::string>())
                   .value_or(counterfact::Family::negation);
    o.display = j.value("display", "");
    o.model_id = j.value("model_id", "");
    o.original_label = parse_label(j.at("original_label").get<std::string>()).value();
    o.perturbed_label = parse_label(j.at("perturbed_label").get<std::string>()).value();
    o.flipped = j.value("flipped", o.original_label != o.perturbed_label);
    o.confidence_delta = j.value("confidence_delta", 0.0);
    if (j.contains("original_rationale") && j["original_rationale"].is_array()) {
      std::vector<std::string> r;
      for (const auto& s : j["original_rationale"]) r.push_back(s.get<std::string>());
      o.original_rationale = std::move(r);
    }
    if (j.contains("perturbed_rationale") && j["perturbed_rationale"].is_array()) {
      std::vector<std::string> r;
      for (const auto& s : j["perturbed_rationale"]) r.push_back(s.get<std::string>());
      o.perturbed_rationale = std::move(r);
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::string outcomes_to_jsonl(const std::vector<counterfact::PerturbationOutcome>& outcomes) {
  std::string text;
  for (const auto& o : outcomes) {
    ordered_json j;
    j["event_id"] = o.event_id;
    j["spec_id"] = o.spec_id;
    j["family"] = counterfact::family_str(o.family);
    j["display"] = o.display;
    j["model_id"] = o.model_id;
    j["original_label"] = label_str(o.original_label);
    j["perturbed_label"] = label_str(o.perturbed_label);
    j["flipped"] = o.flipped;
    j["confidence_delta"] = o.confidence_delta;
    j["original_rationale"] = o.original_rationale ? ordered_json(*o.original_rationale)
                                                   : ordered_json(nullptr);
    j["perturbed_rationale"] = o.perturbed_rationale ? ordered_json(*o.perturbed_rationale)
                                                     : ordered_json(nullptr);
    text += j.dump() + "\n";
  }
  return text;
}

}  // namespace

void stage_perturb(AuditStore& store, const RunConfig& cfg,
                   const std::vector<EventRecord>& events) {
  if (fragment_current(store, cfg, kEnsembleModel, "word_level.json")) return;
  auto amb = store.read_json(cfg.country, store_strategy(cfg), kEnsembleModel,
                             "ambiguity.json");
  if (amb.value("degenerate", false)) {
    ordered_json frag;
    frag["provenance"] = provenance(cfg);
    frag["note"] = "perturbation stage skipped: ambiguity gate unavailable";
    put_json(store, cfg, kEnsembleModel, "word_level.json", frag);
    return;
  }
  std::set<std::string> gated;
  for (const auto& id : amb.at("low_ambiguity_event_ids"))
    gated.insert(id.get<std::string>());
  std::vector<EventRecord> low_events;
  for (const auto& e : events)
    if (gated.count(e.event_id)) low_events.push_back(e);

  auto specs = cfg.perturbation_specs_path.empty()
                   ? counterfact::default_perturbation_specs()
                   : counterfact::load_perturbation_specs(cfg.perturbation_specs_path);
  std::vector<counterfact::ModelUnderTest> models;
  for (const auto& model : cfg.model_ids)
    models.push_back({endpoint_for(cfg, model), strategy_for(cfg)});

  auto run = counterfact::run_counterfactuals(low_events, specs, models, cfg.parallelism,
                                              cfg.review_sample_n,
                                              stage_seed(cfg, "review"));
  if (cfg.review_sample_n > 0) {
    ordered_json review;
    review["provenance"] = provenance(cfg);
    ordered_json pairs = ordered_json::array();
    for (const auto& [orig, pert] : run.review_samples)
      pairs.push_back(ordered_json{{"original", orig}, {"perturbed", pert}});
    review["pairs"] = pairs;
    put_json(store, cfg, kEnsembleModel, "review.json", review);
  }

  store.write_text(cfg.country, store_strategy(cfg), kEnsembleModel,
                   "outcomes.jsonl", outcomes_to_jsonl(run.outcomes), cfg.force);
  store.write_text(cfg.country, store_strategy(cfg), kEnsembleModel,
                   "neutral_outcomes.jsonl", outcomes_to_jsonl(run.neutral_outcomes),
                   cfg.force);

  ordered_json word_frag;
  word_frag["provenance"] = provenance(cfg);
  word_frag["n_gated_events"] = low_events.size();
  word_frag["excluded_failures"] = run.excluded_failures;
  if (!run.neutral_outcomes.empty()) {
    auto table = counterfact::word_level_table(run.outcomes, run.neutral_outcomes);
    word_frag["baseline_n"] = table.baseline_n;
    word_frag["baseline_flips"] = table.baseline_flips;
    word_frag["baseline_rate"] = table.baseline_rate;
    word_frag["baseline_ci"] = rate_json(table.baseline_ci);
    ordered_json rows = ordered_json::array();
    std::vector<std::vector<std::string>> csv_rows;
    for (const auto& r : table.rows) {
      ordered_json per_model;
      for (const auto& [model, n] : r.per_model_n) per_model[model] = n;
      rows.push_back(ordered_json{{"display", r.display},
                                  {"family", counterfact::family_str(r.family)},
                                  {"n", r.n},
                                  {"per_model_n", per_model},
                                  {"flips", r.flips},
                                  {"flip_rate", r.flip_rate},
                                  {"ci", rate_json(r.ci)},
                                  {"delta_phi_pp", r.delta_phi_pp},
                                  {"h", r.h},
                                  {"p", test_json(r.p)}});
      csv_rows.push_back({r.display, counterfact::family_str(r.family),
                          std::to_string(r.n), fmt(r.flip_rate * 100),
                          fmt(r.ci.ci_low * 100), fmt(r.ci.ci_high * 100),
                          fmt(r.delta_phi_pp), fmt(r.h), fmt(r.p.p_value)});
    }
    word_frag["rows"] = rows;
    write_csv_fragment(store, cfg, kEnsembleModel, "word_level.csv",
                       {"word_phrase", "family", "N", "flip_pct", "ci_low_pct",
                        "ci_high_pct", "delta_phi_pp", "h", "p"},
                       csv_rows);
  } else {
    word_frag["note"] = "no neutral-control outcomes; word-level table undefined";
  }
  put_json(store, cfg, kEnsembleModel, "word_level.json", word_frag);

  ordered_json vuln_frag;
  vuln_frag["provenance"] = provenance(cfg);
  if (!run.neutral_outcomes.empty() && !run.outcomes.empty()) {
    auto matrix = counterfact::vulnerability_matrix(run.outcomes, run.neutral_outcomes);
    ordered_json rows = ordered_json::array();
    std::vector<std::vector<std::string>> csv_rows;
    for (const auto& r : matrix.rows) {
      rows.push_back(ordered_json{{"model", r.model_id},
                                  {"family", counterfact::family_str(r.family)},
                                  {"n", r.n},
                                  {"flips", r.flips},
                                  {"flip_rate", r.flip_rate},
                                  {"ci", rate_json(r.ci)},
                                  {"mean_confidence_shift", r.mean_confidence_shift},
                                  {"h", r.h},
                                  {"p", test_json(r.p)}});
      csv_rows.push_back({r.model_id, counterfact::family_str(r.family),
                          std::to_string(r.n), fmt(r.flip_rate * 100),
                          fmt(r.ci.ci_low * 100), fmt(r.ci.ci_high * 100),
                          fmt(r.mean_confidence_shift), fmt(r.h), fmt(r.p.p_value)});
    }
    vuln_frag["rows"] = rows;
    ordered_json neutral;
    for (const auto& [model, cell] : matrix.neutral_by_model)
      neutral[model] = ordered_json{{"flips", cell.first}, {"n", cell.second}};
    vuln_frag["neutral_by_model"] = neutral;
    write_csv_fragment(store, cfg, kEnsembleModel, "vulnerability.csv",
                       {"model", "family", "N", "flip_pct", "ci_low_pct", "ci_high_pct",
                        "mean_confidence_shift", "h", "fisher_p"},
                       csv_rows);
  }
  put_json(store, cfg, kEnsembleModel, "vulnerability.json", vuln_frag);

  ordered_json cluster_frag;
  cluster_frag["provenance"] = provenance(cfg);
  auto profiles = counterfact::flip_profiles(run.outcomes);
  if (profiles.size() >= 2) {
    require_seed(cfg, "sensitivity clustering");
    auto clusters = counterfact::sensitivity_clusters(profiles, stage_seed(cfg, "clusters"));
    cluster_frag["k"] = clusters.k;
    cluster_frag["silhouette"] = clusters.silhouette;
    cluster_frag["degenerate"] = clusters.degenerate;
    ordered_json assignment;
    for (std::size_t i = 0; i < clusters.event_ids.size(); ++i)
      assignment[clusters.event_ids[i]] = clusters.assignment[i];
    cluster_frag["assignment"] = assignment;
    ordered_json centroids = ordered_json::array();
    for (const auto& c : clusters.centroids) centroids.push_back(c);
    cluster_frag["centroids"] = centroids;
  } else {
    cluster_frag["note"] = "fewer than 2 flip profiles; clustering skipped";
  }
  put_json(store, cfg, kEnsembleModel, "clusters.json", cluster_frag);
}

void stage_errortrace(AuditStore& store, const RunConfig& cfg) {
  if (fragment_current(store, cfg, kEnsembleModel, "rfc.json")) return;
  ordered_json frag;
  frag["provenance"] = provenance(cfg);
  if (!store.has(cfg.country, store_strategy(cfg), kEnsembleModel,
                 "outcomes.jsonl")) {
    frag["note"] = "no perturbation outcomes; error trace skipped";
    put_json(store, cfg, kEnsembleModel, "rfc.json", frag);
    return;
  }
  auto outcomes = outcomes_from_jsonl(store.read_text(
      cfg.country, store_strategy(cfg), kEnsembleModel, "outcomes.jsonl"));
  auto neutrals = outcomes_from_jsonl(store.read_text(
      cfg.country, store_strategy(cfg), kEnsembleModel, "neutral_outcomes.jsonl"));
  auto specs = cfg.perturbation_specs_path.empty()
                   ? counterfact::default_perturbation_specs()
                   : counterfact::load_perturbation_specs(cfg.perturbation_specs_path);
  auto analysis = errortrace::rfc_analyze(outcomes, neutrals, specs);

  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& [model, s] : analysis.by_model) {
    auto flag = errortrace::confabulation_flag(s);
    rows.push_back(ordered_json{
        {"model", model},
        {"n_flips", s.n_flips},
        {"n_baseline", s.n_baseline},
        {"eps_delta_rat_pct", s.eps_delta_rat_pct},
        {"eps_rfc_pct", s.eps_rfc_pct},
        {"excluded_missing_rationale", s.excluded_missing_rationale},
        {"confabulation", flag ? ordered_json(*flag) : ordered_json(nullptr)}});
    csv_rows.push_back({model, std::to_string(s.n_flips), std::to_string(s.n_baseline),
                        fmt(s.eps_delta_rat_pct), fmt(s.eps_rfc_pct),
                        flag ? (*flag ? "1" : "0") : ""});
  }
  frag["rows"] = rows;
  frag["n_records"] = analysis.records.size();
  put_json(store, cfg, kEnsembleModel, "rfc.json", frag);
  write_csv_fragment(store, cfg, kEnsembleModel, "rfc.csv",
                     {"model", "n_flips", "n_baseline", "eps_delta_rat_pct",
                      "eps_rfc_pct", "confabulation"},
                     csv_rows);
}

namespace {

// Longitudinal shot-count comparison assembled from every strategy directory
// whose legitbias fragments share this run's corpus digest.
ordered_json assemble_icl(AuditStore& store, const RunConfig& cfg) {
  std::vector<legitbias::LegitimizationReport> reports;
  fs::path country_dir = fs::path(store.root()) / cfg.country;
  if (!fs::exists(country_dir)) return {};
  for (const auto& strategy_entry : fs::directory_iterator(country_dir)) {
    if (!strategy_entry.is_directory()) continue;
    // The shot-count series runs over zero-shot and few-shot prompting; the
    // explainable protocol is a different prompt and stays out.
    std::string strategy_name = strategy_entry.path().filename().string();
    if (strategy_name != "zero_shot" && strategy_name.rfind("few_shot", 0) != 0)
      continue;
    for (const auto& model_entry : fs::directory_iterator(strategy_entry.path())) {
      if (!model_entry.is_directory()) continue;
      fs::path frag = model_entry.path() / "legitbias.json";
      if (!fs::exists(frag)) continue;
      std::ifstream in(frag, std::ios::binary);
      nlohmann::json j;
      in >> j;
      legitbias::LegitCounts counts{j.value("n_fl", std::int64_t{0}),
                                    j.value("n_fi", std::int64_t{0}),
                                    j.value("n_v", std::int64_t{0}),
                                    j.value("n_b", std::int64_t{0})};
      if (counts.n_v < 1 || counts.n_b < 1) continue;
      auto rep = legitbias::legitimization_report(
          counts, 0.95, model_entry.path().filename().string(), j.value("shots", 0));
      rep.corpus_digest =
          std::strtoull(j.value("corpus_digest", "0").c_str(), nullptr, 16);
      reports.push_back(std::move(rep));
    }
  }
  // Keep only reports on this run's corpus.
  std::string digest;
  if (!cfg.model_ids.empty() &&
      store.has(cfg.country, store_strategy(cfg), cfg.model_ids.front(), "infer.json")) {
    auto meta = store.read_json(cfg.country, store_strategy(cfg), cfg.model_ids.front(),
                                "infer.json");
    digest = meta.value("corpus_digest", "");
  }
  std::vector<legitbias::LegitimizationReport> matched;
  std::set<int> shot_settings;
  for (auto& r : reports) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(r.corpus_digest.value_or(0)));
    if (!digest.empty() && digest != buf) continue;
    shot_settings.insert(r.shots);
    matched.push_back(std::move(r));
  }
  if (shot_settings.size() < 2) return {};
  auto cmp = legitbias::icl_comparison(matched);
  ordered_json rows = ordered_json::array();
  for (const auto& row : cmp.rows) {
    rows.push_back(ordered_json{{"model", row.model_id},
                                {"shots", row.shots},
                                {"delta_lb_pp", row.delta_lb_pp},
                                {"p", row.p_value},
                                {"flags", row.flags}});
  }
  return ordered_json{{"rows", rows}};
}

}  // namespace

nlohmann::ordered_json stage_report(AuditStore& store, const RunConfig& cfg) {
  ordered_json report;
  ordered_json prov = provenance(cfg);
  prov["config"] = config_to_json(cfg);
  if (!cfg.model_ids.empty() &&
      store.has(cfg.country, store_strategy(cfg), cfg.model_ids.front(),
                "infer.json")) {
    auto meta = store.read_json(cfg.country, store_strategy(cfg),
                                cfg.model_ids.front(), "infer.json");
    prov["corpus_digest"] = meta.value("corpus_digest", "");
  }
  report["provenance"] = prov;
  ordered_json icl = assemble_icl(store, cfg);
  if (!icl.is_null() && icl.contains("rows")) {
    ordered_json icl_frag;
    icl_frag["provenance"] = provenance(cfg);
    icl_frag["rows"] = icl["rows"];
    put_json(store, cfg, kEnsembleModel, "icl.json", icl_frag);
  }
  ordered_json fragments;
  std::string prefix = cfg.country + "/" + store_strategy(cfg) + "/";
  for (const auto& rel : store.list()) {
    if (rel.rfind(prefix, 0) != 0) continue;
    if (rel.size() > 5 && rel.substr(rel.size() - 5) == ".json" &&
        rel.find("report.json") == std::string::npos) {
      auto path = fs::path(store.root()) / rel;
      std::ifstream in(path, std::ios::binary);
      ordered_json j;
      in >> j;
      fragments[rel.substr(prefix.size())] = j;
    } else if (rel.size() > 6 && rel.substr(rel.size() - 6) == ".jsonl") {
      auto path = fs::path(store.root()) / rel;
      std::ifstream in(path, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      std::string text = ss.str();
      fragments[rel.substr(prefix.size())] =
          ordered_json{{"digest", hex64(fnv1a(text))},
                       {"lines", std::count(text.begin(), text.end(), '\n')}};
    }
  }
  report["fragments"] = fragments;
  store.write_json(cfg.country, store_strategy(cfg), kEnsembleModel, "report.json",
                   report, true);
  return report;
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  // Validate the endpoint before any fragment mutation.
  (void)modelgate::make_endpoint(endpoint_for(cfg, cfg.model_ids.empty()
                                                  ? std::string("model")
                                                  : cfg.model_ids.front()));
  if (cfg.model_ids.empty()) throw ConfigError("at least one --model is required");

  auto events = load_events(cfg);
  AuditStore store(cfg.out_dir);
  stage_infer(store, cfg, events);
  stage_calibrate(store, cfg);
  stage_metrics(store, cfg, events);
  stage_fairness(store, cfg, events);
  stage_legitbias(store, cfg, events);
  stage_ambiguity(store, cfg, events);
  stage_perturb(store, cfg, events);
  stage_errortrace(store, cfg);
  PipelineResult result;
  result.report = stage_report(store, cfg);
  result.report_path = store.fragment_path(cfg.country, store_strategy(cfg),
                                           kEnsembleModel, "report.json");
  return result;
}

}  // namespace caudit::report
