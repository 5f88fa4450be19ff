#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "caudit/ambiguity.hpp"
#include "caudit/corpus.hpp"
#include "caudit/data.hpp"
#include "caudit/counterfact.hpp"
#include "caudit/modelgate.hpp"
#include "caudit/report.hpp"

namespace {

using caudit::ConfigError;
using caudit::DataError;
using caudit::EndpointError;
using caudit::report::AuditStore;
using caudit::report::RunConfig;

constexpr int kExitConfig = 2;
constexpr int kExitEndpoint = 3;
constexpr int kExitData = 4;

void add_common_flags(CLI::App* cmd, RunConfig& cfg, std::string& strategy_name,
                      bool& seed_given) {
  cmd->add_option("--country", cfg.country, "country to audit (corpus filter)");
  cmd->add_option("--model", cfg.model_ids, "model name(s); repeatable")
      ->take_all();
  cmd->add_option("--strategy", strategy_name,
                  "prompting strategy: zero_shot | few_shot | explainable");
  cmd->add_option("--shots", cfg.examples_per_category,
                  "few-shot examples per category (1-5)");
  cmd->add_option("--endpoint", cfg.endpoint_url,
                  "chat endpoint URL, mock:, mock-text:, mock-const:<L>, or replay:<file>");
  cmd->add_option("--seed", cfg.seed, "seed for all resampling stages")
      ->each([&seed_given](const std::string&) { seed_given = true; });
  cmd->add_option("--n-boot", cfg.n_boot, "bootstrap resamples (default 1000)");
  cmd->add_option("--n-perm", cfg.n_perm, "permutation resamples (default 1000)");
  cmd->add_option("--positive-label", cfg.positive_labels,
                  "positive label(s) for the fairness audit")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, caudit::Label>{{"V", caudit::Label::V},
                                               {"B", caudit::Label::B},
                                               {"E", caudit::Label::E},
                                               {"P", caudit::Label::P},
                                               {"R", caudit::Label::R},
                                               {"S", caudit::Label::S}}))
      ->take_all();
  cmd->add_option("--out", cfg.out_dir, "store root directory (default results)");
  cmd->add_option("--corpus", cfg.corpus_path, "corpus file (.csv or canonical .jsonl)");
  cmd->add_option("--sample-n", cfg.sample_n, "stratified sample size (0 = full corpus)");
  cmd->add_option("--parallelism", cfg.parallelism, "classification fan-out bound");
  cmd->add_option("--timeout", cfg.timeout_seconds, "endpoint timeout in seconds");
  cmd->add_option("--retries", cfg.max_retries, "transport retries (default 2)");
  cmd->add_option("--actor-rules", cfg.actor_rules_path, "actor rules JSON override");
  cmd->add_option("--perturbation-specs", cfg.perturbation_specs_path,
                  "perturbation lexicon JSON override");
  cmd->add_option("--example-pool", cfg.example_pool_path,
                  "few-shot demonstration pool JSON override");
  cmd->add_flag("--calibration-split", cfg.calibration_split,
                "fit calibration on a seeded 80/20 split");
  cmd->add_flag("--ambiguity-calibrated", cfg.ambiguity_use_calibrated,
                "score event ambiguity on isotonic-calibrated confidences");
  cmd->add_flag("--force", cfg.force, "overwrite conflicting fragments in place");
  cmd->add_option("--timestamp", cfg.timestamp,
                  "provenance timestamp (unset keeps reports byte-stable)");
}

void apply_env_defaults(RunConfig& cfg, std::string& strategy_name) {
  if (strategy_name.empty()) {
    if (const char* env = std::getenv("STRATEGY")) strategy_name = env;
  }
  if (const char* env = std::getenv("NUM_EXAMPLES")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1 && v <= 5)
      cfg.examples_per_category = static_cast<int>(v);
  }
  if (!strategy_name.empty()) {
    auto s = caudit::parse_strategy(strategy_name);
    if (!s) throw ConfigError("unknown strategy: " + strategy_name);
    cfg.strategy = *s;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Auditing toolkit for conflict-event classifiers"};
  app.require_subcommand(1);

  RunConfig cfg;
  cfg.model_ids.clear();
  std::string strategy_name;
  bool seed_given = false;

  auto* ingest = app.add_subcommand("ingest", "ingest a CSV corpus into canonical JSONL");
  std::string ingest_csv, ingest_out = "corpus.jsonl";
  std::vector<std::string> column_map;
  ingest->add_option("--csv", ingest_csv, "input ACLED-style CSV")->required();
  ingest->add_option("--out-file", ingest_out, "canonical corpus output path");
  ingest->add_option("--actor-rules", cfg.actor_rules_path, "actor rules JSON override");
  ingest->add_option("--columns", column_map,
                     "column remap entries field=csv_header (fields: event_id, "
                     "country, event_date, notes, event_type, actor1)")
      ->take_all();

  std::vector<CLI::App*> stage_cmds;
  auto add_stage = [&](const char* name, const char* desc) {
    auto* cmd = app.add_subcommand(name, desc);
    add_common_flags(cmd, cfg, strategy_name, seed_given);
    stage_cmds.push_back(cmd);
    return cmd;
  };
  add_stage("infer", "classify the corpus through the configured endpoint");
  add_stage("calibrate", "fit isotonic/temperature maps and the selective curve");
  add_stage("metrics", "classification metrics, confusion, disagreement");
  add_stage("fairness", "statistical parity and equalized-odds gaps");
  add_stage("legitbias", "legitimization bias rates and directionality");
  add_stage("ambiguity", "event ambiguity scores and tier gate");
  auto* perturb = add_stage("perturb", "counterfactual perturbations and sensitivity");
  perturb->add_option("--sample-review", cfg.review_sample_n,
                      "dump n random (original, perturbed) pairs for inspection");
  add_stage("errortrace", "rationale-flip concordance over flipped outcomes");
  add_stage("report", "assemble the audit report from fragments");
  auto* all = add_stage("all", "run the full pipeline in stage order");

  auto* dump = app.add_subcommand(
      "dump-defaults", "write the shipped rule and lexicon data files to a directory");
  std::string dump_dir = "data";
  dump->add_option("--dir", dump_dir, "output directory (default data)");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_env_defaults(cfg, strategy_name);
    cfg.seed_set = seed_given;
    if (cfg.model_ids.empty()) cfg.model_ids = {"mock-model"};

    if (ingest->parsed()) {
      auto rules = cfg.actor_rules_path.empty()
                       ? caudit::corpus::default_actor_rules()
                       : caudit::corpus::load_actor_rules(cfg.actor_rules_path);
      caudit::corpus::ColumnMap columns;
      for (const auto& entry : column_map) {
        auto eq = entry.find('=');
        if (eq == std::string::npos)
          throw ConfigError("--columns entries look like field=csv_header");
        std::string field = entry.substr(0, eq), header = entry.substr(eq + 1);
        if (field == "event_id") columns.event_id = header;
        else if (field == "country") columns.country = header;
        else if (field == "event_date") columns.event_date = header;
        else if (field == "notes") columns.notes = header;
        else if (field == "event_type") columns.event_type = header;
        else if (field == "actor1") columns.actor1 = header;
        else throw ConfigError("unknown column-map field: " + field);
      }
      auto result = caudit::corpus::ingest_corpus(ingest_csv, columns, rules);
      caudit::corpus::write_corpus_jsonl(ingest_out, result.records);
      std::cout << "accepted " << result.stats.accepted << ", duplicates "
                << result.stats.duplicates << ", rejected "
                << result.stats.rejected_missing_notes +
                       result.stats.rejected_invalid_label
                << " -> " << ingest_out << "\n";
      return 0;
    }

    auto run_one = [&](const std::string& name) {
      AuditStore store(cfg.out_dir);
      if (name == "all") {
        auto result = caudit::report::run_pipeline(cfg);
        std::cout << "report written to " << result.report_path.string() << "\n";
        return;
      }
      auto events = caudit::report::load_events(cfg);
      if (name == "infer") caudit::report::stage_infer(store, cfg, events);
      else if (name == "calibrate") caudit::report::stage_calibrate(store, cfg);
      else if (name == "metrics") caudit::report::stage_metrics(store, cfg, events);
      else if (name == "fairness") caudit::report::stage_fairness(store, cfg, events);
      else if (name == "legitbias") caudit::report::stage_legitbias(store, cfg, events);
      else if (name == "ambiguity") caudit::report::stage_ambiguity(store, cfg, events);
      else if (name == "perturb") caudit::report::stage_perturb(store, cfg, events);
      else if (name == "errortrace") caudit::report::stage_errortrace(store, cfg);
      else if (name == "report") caudit::report::stage_report(store, cfg);
      std::cout << name << " stage complete under " << cfg.out_dir << "\n";
    };

    if (dump->parsed()) {
      caudit::dump_default_data(dump_dir);
      std::cout << "default data files written to " << dump_dir << "\n";
      return 0;
    }
    for (auto* cmd : stage_cmds)
      if (cmd->parsed()) run_one(cmd->get_name());
    (void)all;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EndpointError& e) {
    std::cerr << "endpoint error: " << e.what() << "\n";
    return kExitEndpoint;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
