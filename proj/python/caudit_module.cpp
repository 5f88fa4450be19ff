#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "caudit/ambiguity.hpp"
#include "caudit/calibrate.hpp"
#include "caudit/corpus.hpp"
#include "caudit/counterfact.hpp"
#include "caudit/errortrace.hpp"
#include "caudit/fairness.hpp"
#include "caudit/legitbias.hpp"
#include "caudit/metrics.hpp"
#include "caudit/modelgate.hpp"
#include "caudit/report.hpp"
#include "caudit/stats.hpp"

namespace py = pybind11;
using namespace caudit;

namespace {

Label label_arg(const std::string& s) {
  auto l = parse_label(s);
  if (!l) throw py::value_error("label must be one of V, B, E, P, R, S");
  return *l;
}

std::map<std::string, Label> gold_arg(const std::map<std::string, std::string>& gold) {
  std::map<std::string, Label> out;
  for (const auto& [k, v] : gold) out[k] = label_arg(v);
  return out;
}

std::map<std::string, ActorGroup> groups_arg(
    const std::map<std::string, std::string>& groups) {
  std::map<std::string, ActorGroup> out;
  for (const auto& [k, v] : groups) {
    auto g = parse_actor_group(v);
    if (!g) throw py::value_error("actor group must be State, NonState, or Other");
    out[k] = *g;
  }
  return out;
}

py::dict rate_dict(const stats::RateEstimate& r) {
  py::dict d;
  d["successes"] = r.successes;
  d["trials"] = r.trials;
  d["rate"] = r.rate;
  d["ci_low"] = r.ci_low;
  d["ci_high"] = r.ci_high;
  d["method"] =
      r.method == stats::IntervalMethod::wilson ? "wilson" : "clopper_pearson";
  d["level"] = r.level;
  return d;
}

py::dict test_dict(const stats::TestResult& t) {
  py::dict d;
  d["statistic"] = t.statistic;
  d["p_value"] = t.p_value;
  switch (t.method) {
    case stats::TestMethod::two_prop_z: d["method"] = "two_prop_z"; break;
    case stats::TestMethod::chi_square: d["method"] = "chi_square"; break;
    case stats::TestMethod::fisher_exact: d["method"] = "fisher_exact"; break;
    case stats::TestMethod::permutation: d["method"] = "permutation"; break;
  }
  d["degenerate"] = t.degenerate;
  return d;
}

Prediction prediction_arg(const py::dict& d) {
  Prediction p;
  p.event_id = d["event_id"].cast<std::string>();
  p.model_id = d.contains("model_id") ? d["model_id"].cast<std::string>() : "model";
  p.label = label_arg(d["label"].cast<std::string>());
  p.confidence = d.contains("confidence") ? d["confidence"].cast<double>() : 0.0;
  if (d.contains("logits")) {
    auto logits = d["logits"].cast<std::map<std::string, double>>();
    for (int i = 0; i < 6; ++i) {
      auto it = logits.find(std::string(1, kLabelCodes[i]));
      p.logits[i] = it == logits.end() ? 0.0 : it->second;
    }
  }
  if (d.contains("rationale") && !d["rationale"].is_none())
    p.rationale = d["rationale"].cast<std::vector<std::string>>();
  return p;
}

std::vector<Prediction> predictions_arg(const std::vector<py::dict>& dicts) {
  std::vector<Prediction> out;
  out.reserve(dicts.size());
  for (const auto& d : dicts) out.push_back(prediction_arg(d));
  return out;
}

}  // namespace

PYBIND11_MODULE(_caudit, m) {
  m.doc() = "Auditing toolkit for conflict-event classifiers (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<EndpointError>(m, "EndpointError");
  py::register_exception<DataError>(m, "DataError");

  // ---- statistical kernel ----
  m.def(
      "wilson_interval",
      [](std::int64_t k, std::int64_t n, double level) {
        return rate_dict(stats::wilson_interval(k, n, level));
      },
      py::arg("successes"), py::arg("trials"), py::arg("level") = 0.95);
  m.def(
      "clopper_pearson",
      [](std::int64_t k, std::int64_t n, double level) {
        return rate_dict(stats::clopper_pearson(k, n, level));
      },
      py::arg("successes"), py::arg("trials"), py::arg("level") = 0.95);
  m.def(
      "two_prop_z",
      [](std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2) {
        return test_dict(stats::two_prop_z(k1, n1, k2, n2));
      },
      py::arg("k1"), py::arg("n1"), py::arg("k2"), py::arg("n2"));
  m.def(
      "chi_or_fisher",
      [](std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
        return test_dict(stats::chi_or_fisher(a, b, c, d));
      },
      py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"));
  m.def(
      "fisher_exact",
      [](std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
        return test_dict(stats::fisher_exact(a, b, c, d));
      },
      py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"));
  m.def("cohen_h", &stats::cohen_h, py::arg("p1"), py::arg("p2"));
  m.def(
      "permutation_test",
      [](const std::vector<double>& a, const std::vector<double>& b, std::int64_t n_perm,
         std::uint64_t seed) {
        auto t = stats::permutation_test(a, b, n_perm, seed);
        auto d = test_dict(t);
        d["n_resamples"] = *t.n_resamples;
        return d;
      },
      py::arg("group_a"), py::arg("group_b"), py::arg("n_perm") = 1000,
      py::arg("seed") = 0);
  m.def(
      "bootstrap_ci_mean",
      [](const std::vector<double>& values, std::int64_t n_boot, double level,
         std::uint64_t seed) {
        return stats::bootstrap_ci_mean(values, n_boot, level, seed);
      },
      py::arg("values"), py::arg("n_boot") = 1000, py::arg("level") = 0.95,
      py::arg("seed") = 0);
  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y) -> py::object {
        auto r = stats::spearman(x, y);
        if (!r.rho) return py::none();
        return py::float_(*r.rho);
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "normalized_entropy",
      [](const std::vector<std::int64_t>& counts) {
        if (counts.size() != 6) throw py::value_error("expected six label counts");
        std::array<std::int64_t, 6> arr{};
        std::copy(counts.begin(), counts.end(), arr.begin());
        return stats::normalized_entropy(arr);
      },
      py::arg("counts"));

  // ---- calibration ----
  py::class_<calibrate::IsotonicMap>(m, "IsotonicMap")
      .def_readonly("steps", &calibrate::IsotonicMap::steps)
      .def("apply", &calibrate::IsotonicMap::apply, py::arg("confidence"));
  m.def(
      "fit_isotonic",
      [](std::vector<std::pair<double, double>> pairs) {
        return calibrate::fit_isotonic(std::move(pairs));
      },
      py::arg("pairs"));
  m.def("brier", &calibrate::brier, py::arg("confidences"), py::arg("outcomes"));
  m.def(
      "fit_temperature",
      [](const std::vector<std::vector<double>>& dists,
         const std::vector<std::string>& gold) {
        std::vector<LabelDist> d;
        for (const auto& row : dists) {
          if (row.size() != 6) throw py::value_error("each distribution needs 6 values");
          LabelDist a{};
          std::copy(row.begin(), row.end(), a.begin());
          d.push_back(a);
        }
        std::vector<Label> g;
        for (const auto& s : gold) g.push_back(label_arg(s));
        auto fit = calibrate::fit_temperature(d, g);
        py::dict out;
        out["temperature"] = fit.map.temperature;
        out["nll"] = fit.nll;
        out["degenerate_at_bound"] = fit.degenerate_at_bound;
        return out;
      },
      py::arg("distributions"), py::arg("gold_labels"));
  m.def(
      "selective_curve",
      [](const std::vector<double>& conf, const std::vector<int>& correct,
         const std::vector<double>& taus) {
        py::list out;
        for (const auto& p : calibrate::selective_curve(conf, correct, taus)) {
          py::dict d;
          d["tau"] = p.tau;
          d["coverage"] = p.coverage;
          d["accuracy"] = p.accuracy ? py::object(py::float_(*p.accuracy)) : py::none();
          out.append(d);
        }
        return out;
      },
      py::arg("confidences"), py::arg("correct"), py::arg("taus"));

  // ---- classification metrics ----
  m.def(
      "score",
      [](const std::vector<py::dict>& preds,
         const std::map<std::string, std::string>& gold) {
        auto r = metrics::score(predictions_arg(preds), gold_arg(gold));
        py::dict out;
        out["accuracy"] = r.accuracy;
        out["macro_precision"] = r.macro_precision;
        out["macro_recall"] = r.macro_recall;
        out["macro_f1"] = r.macro_f1;
        py::dict per_class;
        for (int k = 0; k < 6; ++k) {
          py::dict c;
          c["precision"] = r.per_class[k].precision;
          c["recall"] = r.per_class[k].recall;
          c["f1"] = r.per_class[k].f1;
          c["support"] = r.per_class[k].support;
          per_class[py::str(std::string(1, kLabelCodes[k]))] = c;
        }
        out["per_class"] = per_class;
        py::list confusion;
        for (int i = 0; i < 6; ++i) {
          py::list row;
          for (int j = 0; j < 6; ++j) row.append(r.confusion.counts[i][j]);
          confusion.append(row);
        }
        out["confusion"] = confusion;
        return out;
      },
      py::arg("predictions"), py::arg("gold"));

  // ---- legitimization bias ----
  m.def(
      "legitimization_report",
      [](std::int64_t n_fl, std::int64_t n_fi, std::int64_t n_v, std::int64_t n_b,
         double level) {
        auto r = legitbias::legitimization_report({n_fl, n_fi, n_v, n_b}, level);
        py::dict out;
        out["eps_fl"] = rate_dict(r.eps_fl);
        out["eps_fi"] = rate_dict(r.eps_fi);
        out["delta_lb_pp"] = r.delta_lb_pp;
        out["p"] = test_dict(r.p);
        return out;
      },
      py::arg("n_fl"), py::arg("n_fi"), py::arg("n_v"), py::arg("n_b"),
      py::arg("level") = 0.95);
  m.def(
      "count_legitimization_errors",
      [](const std::vector<py::dict>& preds,
         const std::map<std::string, std::string>& gold) {
        auto c = legitbias::count_legitimization_errors(predictions_arg(preds),
                                                        gold_arg(gold));
        py::dict out;
        out["n_fl"] = c.n_fl;
        out["n_fi"] = c.n_fi;
        out["n_v"] = c.n_v;
        out["n_b"] = c.n_b;
        return out;
      },
      py::arg("predictions"), py::arg("gold"));

  // ---- fairness ----
  m.def(
      "audit_fairness",
      [](const std::vector<py::dict>& preds,
         const std::map<std::string, std::string>& gold,
         const std::map<std::string, std::string>& groups, const std::string& positive,
         std::int64_t n_boot, std::int64_t n_perm, std::uint64_t seed) {
        auto r = fairness::audit_fairness(predictions_arg(preds), gold_arg(gold),
                                          groups_arg(groups), label_arg(positive),
                                          n_boot, n_perm, seed);
        py::dict out;
        out["spd"] = r.spd;
        out["spd_ci"] = py::make_tuple(r.spd_ci.first, r.spd_ci.second);
        out["d_tpr"] = r.d_tpr ? py::object(py::float_(*r.d_tpr)) : py::none();
        out["d_fpr"] = r.d_fpr ? py::object(py::float_(*r.d_fpr)) : py::none();
        out["p_tpr"] = r.p_tpr ? py::object(py::float_(*r.p_tpr)) : py::none();
        out["p_fpr"] = r.p_fpr ? py::object(py::float_(*r.p_fpr)) : py::none();
        out["excluded_other"] = r.excluded_other;
        return out;
      },
      py::arg("predictions"), py::arg("gold"), py::arg("groups"),
      py::arg("positive_label"), py::arg("n_boot") = 1000, py::arg("n_perm") = 1000,
      py::arg("seed") = 0);

  // ---- ambiguity ----
  m.def("text_ambiguity",
        [](const std::string& notes) { return ambiguity::text_ambiguity(notes); },
        py::arg("notes"));
  m.def(
      "score_event_ambiguity",
      [](const std::vector<py::dict>& preds, const std::string& notes) {
        auto s = ambiguity::score_event(predictions_arg(preds), notes);
        py::dict out;
        out["label_entropy"] = s.label_entropy;
        out["confidence_uncertainty"] = s.confidence_uncertainty;
        out["confidence_dispersion"] = s.confidence_dispersion;
        out["text_ambiguity"] = s.text_ambiguity;
        out["total"] = s.total;
        out["tier"] = ambiguity::tier_str(s.tier);
        return out;
      },
      py::arg("predictions"), py::arg("notes"));

  // ---- perturbations ----
  m.def(
      "apply_perturbation",
      [](const std::string& notes, const std::string& spec_id) -> py::object {
        for (const auto& spec : counterfact::default_perturbation_specs()) {
          if (spec.id != spec_id) continue;
          auto applied = counterfact::apply_perturbation(notes, spec);
          if (!applied) return py::none();
          return py::str(applied->text);
        }
        throw py::value_error("unknown perturbation spec id: " + spec_id);
      },
      py::arg("notes"), py::arg("spec_id"));
  m.def("perturbation_spec_ids", []() {
    std::vector<std::string> ids;
    for (const auto& spec : counterfact::default_perturbation_specs())
      ids.push_back(spec.id);
    return ids;
  });

  // ---- corpus and pipeline ----
  m.def(
      "normalize_actor",
      [](const std::string& actor, const std::string& country) {
        return actor_group_str(
            corpus::normalize_actor(actor, country, corpus::default_actor_rules()));
      },
      py::arg("actor"), py::arg("country") = "");
  m.def(
      "ingest_corpus",
      [](const std::string& csv_path, const std::string& out_path) {
        auto result = corpus::ingest_corpus(csv_path);
        corpus::write_corpus_jsonl(out_path, result.records);
        py::dict out;
        out["accepted"] = result.stats.accepted;
        out["duplicates"] = result.stats.duplicates;
        out["rejected_missing_notes"] = result.stats.rejected_missing_notes;
        out["rejected_invalid_label"] = result.stats.rejected_invalid_label;
        return out;
      },
      py::arg("csv_path"), py::arg("out_path"));
  m.def(
      "run_pipeline",
      [](const py::dict& config) {
        report::RunConfig cfg;
        if (config.contains("country")) cfg.country = config["country"].cast<std::string>();
        if (config.contains("models"))
          cfg.model_ids = config["models"].cast<std::vector<std::string>>();
        if (config.contains("strategy")) {
          auto s = parse_strategy(config["strategy"].cast<std::string>());
          if (!s) throw py::value_error("unknown strategy");
          cfg.strategy = *s;
        }
        if (config.contains("shots"))
          cfg.examples_per_category = config["shots"].cast<int>();
        if (config.contains("endpoint"))
          cfg.endpoint_url = config["endpoint"].cast<std::string>();
        if (config.contains("seed")) {
          cfg.seed = config["seed"].cast<std::uint64_t>();
          cfg.seed_set = true;
        }
        if (config.contains("n_boot")) cfg.n_boot = config["n_boot"].cast<std::int64_t>();
        if (config.contains("n_perm")) cfg.n_perm = config["n_perm"].cast<std::int64_t>();
        if (config.contains("corpus")) cfg.corpus_path = config["corpus"].cast<std::string>();
        if (config.contains("out")) cfg.out_dir = config["out"].cast<std::string>();
        if (config.contains("sample_n"))
          cfg.sample_n = config["sample_n"].cast<std::int64_t>();
        if (config.contains("parallelism"))
          cfg.parallelism = config["parallelism"].cast<int>();
        auto result = report::run_pipeline(cfg);
        return result.report_path.string();
      },
      py::arg("config"));

  m.attr("__version__") = report::kToolkitVersion;
}
