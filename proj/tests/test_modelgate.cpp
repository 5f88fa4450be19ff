#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "caudit/modelgate.hpp"

using namespace caudit;
using namespace caudit::modelgate;

namespace {

EventRecord event(const std::string& id, const std::string& notes) {
  EventRecord e;
  e.event_id = id;
  e.notes = notes;
  e.true_label = Label::V;
  e.notes_length = static_cast<int>(notes.size());
  return e;
}

}  // namespace

TEST_CASE("zero-shot prompt carries the category protocol") {
  StrategyConfig cfg;
  cfg.strategy = Strategy::zero_shot;
  auto p = build_prompt(event("e1", "Soldiers fired at a market."), cfg);
  CHECK(!p.system.has_value());
  CHECK(p.user.find("- V = Violence against civilians") != std::string::npos);
  CHECK(p.user.find("- S = Strategic developments") != std::string::npos);
  CHECK(p.user.find("Return ONLY valid JSON") != std::string::npos);
  CHECK(p.user.find("Soldiers fired at a market.") != std::string::npos);
  CHECK(p.user.find("must sum to 1.0") != std::string::npos);
  CHECK(p.response_schema["required"] == nlohmann::ordered_json({"label", "confidence"}));

  // Byte-deterministic in (event, cfg).
  auto q = build_prompt(event("e1", "Soldiers fired at a market."), cfg);
  CHECK(p.user == q.user);
}

TEST_CASE("few-shot prompt interleaves demonstrations in label order") {
  StrategyConfig cfg;
  cfg.strategy = Strategy::few_shot;
  cfg.examples_per_category = 3;
  auto p = build_prompt(event("e1", "Troops clashed with militia."), cfg);
  REQUIRE(p.system.has_value());
  CHECK(p.system->find("expert political conflict event analyst") != std::string::npos);

  std::size_t demos = 0, pos = 0;
  while ((pos = p.user.find("Event: ", pos)) != std::string::npos) {
    ++demos;
    pos += 7;
  }
  CHECK(demos == 19);  // 18 demonstrations plus the target event line

  // Label-order blocks: first demo is V, last demo before the target is S.
  std::size_t v_pos = p.user.find("\"label\": \"V\"");
  std::size_t s_pos = p.user.rfind("\"label\": \"S\"");
  CHECK(v_pos != std::string::npos);
  CHECK(s_pos != std::string::npos);
  CHECK(v_pos < s_pos);
  CHECK(p.user.find("Troops clashed with militia.") > s_pos);
  CHECK(p.response_schema["required"] ==
        nlohmann::ordered_json({"label", "confidence", "logits"}));

  // Demonstration JSON uses the pool's plain decimal formatting.
  CHECK(p.user.find("\"confidence\": 0.89") != std::string::npos);
  CHECK(p.user.find("\"S\": 0.0}") != std::string::npos);

  cfg.examples_per_category = 6;
  CHECK_THROWS_AS(build_prompt(event("e1", "x"), cfg), ConfigError);
  cfg.examples_per_category = 0;
  CHECK_THROWS_AS(build_prompt(event("e1", "x"), cfg), ConfigError);
}

TEST_CASE("explainable prompt demands three reasoning items") {
  StrategyConfig cfg;
  cfg.strategy = Strategy::explainable;
  auto p = build_prompt(event("e1", "Police dispersed a protest."), cfg);
  REQUIRE(p.system.has_value());
  CHECK(*p.system ==
        "You are an expert political conflict event analyst. "
        "Always explain your reasoning step-by-step before classification.");
  CHECK(p.user.find("exactly three short items") != std::string::npos);
  CHECK(p.user.find("at most 20 words") != std::string::npos);
  CHECK(p.response_schema["required"] ==
        nlohmann::ordered_json({"reasoning", "label", "confidence", "logits"}));
}

TEST_CASE("py_float_repr mirrors the demo pool formatting") {
  CHECK(py_float_repr(0.89) == "0.89");
  CHECK(py_float_repr(0.0) == "0.0");
  CHECK(py_float_repr(0.9) == "0.9");
  CHECK(py_float_repr(1.0) == "1.0");
  CHECK(py_float_repr(0.05) == "0.05");
}

TEST_CASE("parse_response accepts the canonical payload") {
  std::string raw =
      R"({"label":"V","confidence":0.89,"logits":{"V":0.89,"B":0.05,"E":0.02,"P":0.01,"R":0.02,"S":0.01}})";
  auto out = parse_response(raw, Strategy::zero_shot);
  REQUIRE(out.prediction.has_value());
  CHECK(out.prediction->label == Label::V);
  CHECK(out.prediction->confidence == doctest::Approx(0.89));
  CHECK(out.prediction->logits[0] == doctest::Approx(0.89));
  CHECK(!out.logits_renormalized);
  CHECK(out.prediction->raw_response == raw);
}

TEST_CASE("parse_response extracts the first JSON object from prose") {
  std::string raw =
      "Sure! Here is my answer:\n```json\n{\"label\": \"B\", \"confidence\": 0.7}\n```\n"
      "Let me know if that helps.";
  auto out = parse_response(raw, Strategy::zero_shot);
  REQUIRE(out.prediction.has_value());
  CHECK(out.prediction->label == Label::B);
  CHECK(out.logits_synthesized);  // absent logits rebuilt from confidence
  double sum = 0.0;
  for (double v : out.prediction->logits) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("parse_response renormalizes small drift and rejects nonsense") {
  auto near = parse_response(
      R"({"label":"E","confidence":0.5,"logits":{"V":0.2,"B":0.2,"E":0.204,"P":0.2,"R":0.1,"S":0.1}})",
      Strategy::zero_shot);
  REQUIRE(near.prediction.has_value());
  CHECK(near.logits_renormalized);
  double sum = 0.0;
  for (double v : near.prediction->logits) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  auto far = parse_response(
      R"({"label":"E","confidence":0.5,"logits":{"V":0.4,"B":0.2,"E":0.2,"P":0.2,"R":0.1,"S":0.1}})",
      Strategy::zero_shot);
  CHECK(!far.prediction.has_value());
  CHECK(far.error.find("0.01") != std::string::npos);
}

TEST_CASE("parse_response rejects invalid fields") {
  CHECK(!parse_response("no json here", Strategy::zero_shot).prediction.has_value());
  CHECK(!parse_response(R"({"label":"X","confidence":0.5})", Strategy::zero_shot)
             .prediction.has_value());
  CHECK(!parse_response(R"({"label":"Violence","confidence":0.5})", Strategy::zero_shot)
             .prediction.has_value());
  CHECK(!parse_response(R"({"label":"V","confidence":1.5})", Strategy::zero_shot)
             .prediction.has_value());
  CHECK(!parse_response(R"({"label":"V"})", Strategy::zero_shot).prediction.has_value());
  CHECK(!parse_response(
             R"({"label":"V","confidence":0.5,"logits":{"V":-0.1,"B":1.1,"E":0,"P":0,"R":0,"S":0}})",
             Strategy::zero_shot)
             .prediction.has_value());

  // Explainable requires a 3-item reasoning list.
  auto two_items = parse_response(
      R"({"reasoning":["a","b"],"label":"V","confidence":0.5,"logits":{"V":1,"B":0,"E":0,"P":0,"R":0,"S":0}})",
      Strategy::explainable);
  CHECK(!two_items.prediction.has_value());
  auto three_items = parse_response(
      R"({"reasoning":["a","b","c"],"label":"V","confidence":0.5,"logits":{"V":1,"B":0,"E":0,"P":0,"R":0,"S":0}})",
      Strategy::explainable);
  REQUIRE(three_items.prediction.has_value());
  REQUIRE(three_items.prediction->rationale.has_value());
  CHECK(three_items.prediction->rationale->size() == 3);
}

TEST_CASE("mock endpoint is deterministic and full-pipeline parseable") {
  EndpointConfig cfg;
  cfg.url = "mock:";
  cfg.model = "model-a";
  auto endpoint = make_endpoint(cfg);
  StrategyConfig strat;
  auto e = event("evt-1", "Soldiers killed two villagers.");
  auto r1 = classify(e, strat, *endpoint, cfg);
  auto r2 = classify(e, strat, *endpoint, cfg);
  REQUIRE(r1.prediction.has_value());
  REQUIRE(r2.prediction.has_value());
  CHECK(r1.prediction->label == r2.prediction->label);
  CHECK(r1.prediction->confidence == r2.prediction->confidence);
  CHECK(r1.prediction->raw_response == r2.prediction->raw_response);

  // Different model id shifts the verdict hash space.
  EndpointConfig cfg_b = cfg;
  cfg_b.model = "model-b";
  auto endpoint_b = make_endpoint(cfg_b);
  bool any_diff = false;
  for (int i = 0; i < 20 && !any_diff; ++i) {
    auto ev = event("evt-" + std::to_string(i), "text");
    auto pa = classify(ev, strat, *endpoint, cfg);
    auto pb = classify(ev, strat, *endpoint_b, cfg_b);
    any_diff = pa.prediction->label != pb.prediction->label;
  }
  CHECK(any_diff);

  // The plain mock ignores the notes text entirely.
  auto other = classify(event("evt-1", "Completely different text."), strat, *endpoint, cfg);
  CHECK(other.prediction->label == r1.prediction->label);

  // mock-text is text-sensitive.
  EndpointConfig cfg_t = cfg;
  cfg_t.url = "mock-text:";
  auto endpoint_t = make_endpoint(cfg_t);
  bool text_diff = false;
  for (int i = 0; i < 30 && !text_diff; ++i) {
    auto ev = event("evt-" + std::to_string(i), "base text");
    auto pa = classify(ev, strat, *endpoint_t, cfg_t);
    auto ev2 = ev;
    ev2.notes = "base text perturbed";
    auto pb = classify(ev2, strat, *endpoint_t, cfg_t);
    text_diff = pa.prediction->label != pb.prediction->label;
  }
  CHECK(text_diff);
}

TEST_CASE("constant mock always answers the fixed label") {
  EndpointConfig cfg;
  cfg.url = "mock-const:S";
  cfg.model = "const";
  auto endpoint = make_endpoint(cfg);
  StrategyConfig strat;
  for (int i = 0; i < 10; ++i) {
    auto r = classify(event("e" + std::to_string(i), "text " + std::to_string(i)), strat,
                      *endpoint, cfg);
    REQUIRE(r.prediction.has_value());
    CHECK(r.prediction->label == Label::S);
  }
  CHECK_THROWS_AS(make_endpoint({.url = "mock-const:Q"}), ConfigError);
  CHECK_THROWS_AS(make_endpoint({.url = "carrier-pigeon:"}), ConfigError);
}

TEST_CASE("replay endpoint reproduces a stored run byte-for-byte") {
  EndpointConfig mock_cfg;
  mock_cfg.url = "mock:";
  mock_cfg.model = "replayed-model";
  StrategyConfig strat;
  std::vector<EventRecord> events;
  for (int i = 0; i < 8; ++i)
    events.push_back(event("evt" + std::to_string(i), "note " + std::to_string(i)));
  auto batch = classify_batch(events, strat, mock_cfg, 2);
  REQUIRE(batch.predictions.size() == events.size());

  auto path = std::filesystem::temp_directory_path() / "caudit_replay.jsonl";
  write_predictions_jsonl(path.string(), batch.predictions);

  EndpointConfig replay_cfg;
  replay_cfg.url = "replay:" + path.string();
  replay_cfg.model = "replayed-model";
  auto replayed = classify_batch(events, strat, replay_cfg, 2);
  REQUIRE(replayed.predictions.size() == batch.predictions.size());
  for (std::size_t i = 0; i < batch.predictions.size(); ++i) {
    CHECK(replayed.predictions[i].raw_response == batch.predictions[i].raw_response);
    CHECK(replayed.predictions[i].label == batch.predictions[i].label);
    CHECK(replayed.predictions[i].confidence == batch.predictions[i].confidence);
  }

  // Unknown events are recorded as failures, not retried.
  auto missing = classify(event("unknown-evt", "x"), strat,
                          *make_endpoint(replay_cfg), replay_cfg);
  CHECK(!missing.prediction.has_value());
  REQUIRE(missing.failure.has_value());
  CHECK(!missing.failure->transport);
  std::filesystem::remove(path);
}

TEST_CASE("classify_batch orders results by event id and records parse failures") {
  // A replay file with one malformed raw response.
  auto path = std::filesystem::temp_directory_path() / "caudit_replay_bad.jsonl";
  {
    std::ofstream out(path);
    out << R"({"event_id":"a","label":"V","confidence":0.9,"raw_response":"{\"label\":\"V\",\"confidence\":0.9}"})"
        << "\n";
    out << R"({"event_id":"b","label":"V","confidence":0.9,"raw_response":"{\"label\":\"X\",\"confidence\":0.9}"})"
        << "\n";
    out << R"({"event_id":"c","label":"B","confidence":0.8,"raw_response":"{\"label\":\"B\",\"confidence\":0.8}"})"
        << "\n";
  }
  EndpointConfig cfg;
  cfg.url = "replay:" + path.string();
  cfg.model = "m";
  StrategyConfig strat;
  std::vector<EventRecord> events = {event("c", "3"), event("a", "1"), event("b", "2")};
  auto batch = classify_batch(events, strat, cfg, 3);
  REQUIRE(batch.predictions.size() == 2);
  CHECK(batch.predictions[0].event_id == "a");
  CHECK(batch.predictions[1].event_id == "c");
  REQUIRE(batch.failures.size() == 1);
  CHECK(batch.failures[0].event_id == "b");
  CHECK(batch.failures[0].raw_response.find("\"X\"") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("prediction jsonl round trip") {
  Prediction p;
  p.event_id = "e1";
  p.model_id = "m1";
  p.strategy = Strategy::explainable;
  p.shots = 0;
  p.label = Label::R;
  p.confidence = 0.77;
  p.logits = {0.1, 0.1, 0.1, 0.1, 0.5, 0.1};
  p.rationale = std::vector<std::string>{"one", "two", "three"};
  p.raw_response = "{}";
  auto path = std::filesystem::temp_directory_path() / "caudit_pred_rt.jsonl";
  write_predictions_jsonl(path.string(), {p});
  auto loaded = read_predictions_jsonl(path.string());
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].event_id == p.event_id);
  CHECK(loaded[0].label == p.label);
  CHECK(loaded[0].confidence == p.confidence);
  CHECK(loaded[0].logits == p.logits);
  REQUIRE(loaded[0].rationale.has_value());
  CHECK(loaded[0].rationale->at(2) == "three");
  std::filesystem::remove(path);
}

TEST_CASE("classify retries transport failures only, bounded") {
  // Endpoint that fails with a transport error a fixed number of times.
  class FlakyEndpoint : public ModelEndpoint {
   public:
    explicit FlakyEndpoint(int failures) : remaining_(failures) {}
    CompletionResult complete(const CompletionRequest&) override {
      ++calls;
      if (remaining_-- > 0) return {false, "", "connection reset", true};
      return {true, R"({"label":"V","confidence":0.9})", "", false};
    }
    int calls = 0;

   private:
    int remaining_;
  };

  StrategyConfig strat;
  EndpointConfig cfg;
  cfg.model = "flaky";
  auto e = event("e1", "text");

  FlakyEndpoint two_failures(2);
  cfg.max_retries = 2;
  auto ok = classify(e, strat, two_failures, cfg);
  CHECK(ok.prediction.has_value());
  CHECK(two_failures.calls == 3);

  FlakyEndpoint too_many(3);
  cfg.max_retries = 2;
  auto exhausted = classify(e, strat, too_many, cfg);
  CHECK(!exhausted.prediction.has_value());
  REQUIRE(exhausted.failure.has_value());
  CHECK(exhausted.failure->transport);
  CHECK(too_many.calls == 3);

  // Parse failures are never retried.
  class BadJsonEndpoint : public ModelEndpoint {
   public:
    CompletionResult complete(const CompletionRequest&) override {
      ++calls;
      return {true, "not json at all", "", false};
    }
    int calls = 0;
  };
  BadJsonEndpoint bad;
  cfg.max_retries = 5;
  auto parse_fail = classify(e, strat, bad, cfg);
  CHECK(!parse_fail.prediction.has_value());
  CHECK(bad.calls == 1);
  CHECK(!parse_fail.failure->transport);
}
