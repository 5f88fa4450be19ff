#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "caudit/types.hpp"

namespace caudit::modelgate {

struct Demonstration {
  std::string text;
  Label label = Label::V;
  double confidence = 0.0;
  LabelDist logits{};
};

// Per-label demonstration pool used by the few-shot strategy; defaults to the
// shipped Cameroon/Nigeria pool (data/example_pool.json mirrors it).
std::map<Label, std::vector<Demonstration>> default_example_pool();
std::map<Label, std::vector<Demonstration>> load_example_pool(const std::string& path);

struct StrategyConfig {
  Strategy strategy = Strategy::zero_shot;
  int examples_per_category = 3;  // few-shot only; must be in [1,5]
  std::map<Label, std::vector<Demonstration>> example_pool = default_example_pool();

  int shots() const {
    return strategy == Strategy::few_shot ? examples_per_category * 6 : 0;
  }
};

struct Prompt {
  std::optional<std::string> system;
  std::string user;
  nlohmann::ordered_json response_schema;
};

// Byte-deterministic in (event, cfg).
Prompt build_prompt(const EventRecord& event, const StrategyConfig& cfg);

// Formats a double the way Python's json module does for the demo pool
// values (1.0 -> "1.0", 0.89 -> "0.89").
std::string py_float_repr(double v);

struct ParseOutcome {
  std::optional<Prediction> prediction;
  std::string error;  // empty iff prediction is set
  bool logits_renormalized = false;
  bool logits_synthesized = false;  // absent logits rebuilt from confidence
};

// Extracts the first well-formed JSON object in raw and validates it against
// the Prediction invariants. Never yields a Prediction that violates them.
ParseOutcome parse_response(const std::string& raw, Strategy strategy);

struct EndpointConfig {
  // "mock:", "mock-const:<L>", "mock-text:", "replay:<path>", or an http(s)
  // chat endpoint URL (e.g. http://localhost:11434/api/chat).
  std::string url = "mock:";
  std::string model = "mock-model";
  int timeout_seconds = 60;
  int max_retries = 2;  // transport failures only, never parse failures
  nlohmann::ordered_json extra_options;  // forwarded opaque (e.g. num_predict)
};

struct CompletionRequest {
  std::string event_id;
  std::string model;
  std::string notes;
  Strategy strategy = Strategy::zero_shot;
  Prompt prompt;
};

struct CompletionResult {
  bool ok = false;
  std::string content;
  std::string error;
  bool transport_failure = false;  // retryable
};

class ModelEndpoint {
 public:
  virtual ~ModelEndpoint() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

std::unique_ptr<ModelEndpoint> make_endpoint(const EndpointConfig& cfg);

struct ClassifyFailure {
  std::string event_id;
  std::string model_id;
  std::string reason;
  std::string raw_response;
  bool transport = false;
};

struct ClassifyResult {
  std::optional<Prediction> prediction;
  std::optional<ClassifyFailure> failure;
};

ClassifyResult classify(const EventRecord& event, const StrategyConfig& cfg,
                        ModelEndpoint& endpoint, const EndpointConfig& endpoint_cfg);

struct BatchResult {
  std::vector<Prediction> predictions;  // event_id order
  std::vector<ClassifyFailure> failures;
};

// Bounded fan-out; output order is fixed by event_id regardless of
// completion order.
BatchResult classify_batch(const std::vector<EventRecord>& events,
                           const StrategyConfig& cfg, const EndpointConfig& endpoint_cfg,
                           int parallelism = 4);

// Prediction persistence: line-delimited JSON, one Prediction per line.
void write_predictions_jsonl(const std::string& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions_jsonl(const std::string& path);

nlohmann::ordered_json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

std::uint64_t request_digest(const std::string& prompt_user);

}  // namespace caudit::modelgate
