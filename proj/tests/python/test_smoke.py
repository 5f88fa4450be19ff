"""Smoke tests for the pybind11 surface. The heavy verification lives in the
C++ suites; these only prove the bindings are wired and sane."""

import json
import math

import pytest

import caudit


def test_version():
    assert caudit.__version__


def test_intervals_and_tests():
    w = caudit.wilson_interval(62, 339)
    assert abs(w["rate"] - 62 / 339) < 1e-12
    assert abs(w["ci_low"] * 100 - 14.59) < 0.2
    assert abs(w["ci_high"] * 100 - 22.68) < 0.2

    cp = caudit.clopper_pearson(4, 6)
    assert abs(cp["ci_low"] * 100 - 22.3) < 0.1
    assert abs(cp["ci_high"] * 100 - 95.7) < 0.1

    z = caudit.two_prop_z(16, 339, 6, 362)
    assert abs(z["p_value"] - 0.022) < 0.01

    f = caudit.chi_or_fisher(4, 2, 11, 79)
    assert f["method"] == "fisher_exact"
    assert abs(f["p_value"] - 0.005) < 0.003

    assert abs(caudit.cohen_h(0.667, 0.122) - 1.20) < 0.01
    assert caudit.normalized_entropy([1, 1, 1, 1, 1, 1]) == pytest.approx(1.0)
    assert caudit.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert caudit.spearman([1, 1, 1], [1, 2, 3]) is None


def test_resampling_is_seeded():
    p1 = caudit.permutation_test([1, 2, 3, 9], [4, 4, 4, 0], n_perm=500, seed=11)
    p2 = caudit.permutation_test([1, 2, 3, 9], [4, 4, 4, 0], n_perm=500, seed=11)
    assert p1["p_value"] == p2["p_value"]
    lo, hi = caudit.bootstrap_ci_mean([0.0, 1.0], n_boot=500, seed=3)
    assert (lo, hi) == (0.0, 1.0)


def test_calibration():
    iso = caudit.fit_isotonic([(0.1, 0), (0.3, 1), (0.6, 0), (0.9, 1)])
    values = [y for _, y in iso.steps]
    assert values == pytest.approx([0.0, 0.5, 0.5, 1.0])
    assert iso.apply(0.0) == pytest.approx(0.0)
    assert iso.apply(0.95) == pytest.approx(1.0)

    assert caudit.brier([0.9, 0.2], [1, 0]) == pytest.approx(0.025)

    fit = caudit.fit_temperature(
        [[0.9, 0.02, 0.02, 0.02, 0.02, 0.02]] * 10,
        ["V"] * 6 + ["B"] * 4,
    )
    assert fit["temperature"] > 1.0

    curve = caudit.selective_curve([0.95, 0.5, 0.1], [1, 0, 1], [0.0, 0.9])
    assert curve[0]["coverage"] == pytest.approx(1.0)
    assert curve[1]["coverage"] == pytest.approx(1 / 3)


def test_score_and_legitbias():
    preds = [
        {"event_id": "e1", "label": "V"},
        {"event_id": "e2", "label": "B"},
        {"event_id": "e3", "label": "B"},
        {"event_id": "e4", "label": "B"},
    ]
    gold = {"e1": "V", "e2": "V", "e3": "B", "e4": "B"}
    r = caudit.score(preds, gold)
    assert r["accuracy"] == pytest.approx(0.75)
    assert r["per_class"]["B"]["f1"] == pytest.approx(0.8)

    counts = caudit.count_legitimization_errors(preds, gold)
    assert counts == {"n_fl": 1, "n_fi": 0, "n_v": 2, "n_b": 2}

    rep = caudit.legitimization_report(0, 62, 362, 339)
    assert rep["delta_lb_pp"] == pytest.approx(18.29, abs=0.01)
    assert math.log10(rep["p"]["p_value"]) <= -15


def test_fairness_and_ambiguity():
    preds, gold, groups = [], {}, {}
    for i in range(8):
        eid = f"e{i}"
        group = "State" if i < 4 else "NonState"
        pred = "V" if (i < 3 or i == 4) else "B"
        preds.append({"event_id": eid, "label": pred})
        gold[eid] = "V"
        groups[eid] = group
    r = caudit.audit_fairness(preds, gold, groups, "V", n_boot=200, n_perm=200, seed=1)
    assert r["spd"] == pytest.approx(0.5)

    amb = caudit.score_event_ambiguity(
        [
            {"event_id": "e", "model_id": "a", "label": "V", "confidence": 0.5},
            {"event_id": "e", "model_id": "b", "label": "B", "confidence": 0.5},
        ],
        "Teachers held a peaceful protest",
    )
    assert amb["tier"] in {"low", "medium", "high"}
    assert caudit.text_ambiguity(
        "Unidentified armed group shot and killed a civilian"
    ) == pytest.approx(0.75)


def test_perturbations():
    assert "neg_killed" in caudit.perturbation_spec_ids()
    out = caudit.apply_perturbation(
        "An unidentified armed group shot and killed a bike rider", "neg_killed"
    )
    assert out == "An unidentified armed group shot and did not kill a bike rider"
    assert caudit.apply_perturbation("No trigger here", "neg_killed") is None


def test_pipeline_end_to_end(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    rows = []
    notes = [
        "Military forces killed two villagers in Placename on Monday.",
        "Police arrested three protesters near the market.",
        "Rebel militia clashed with soldiers, several wounded.",
        "Teachers said they would march later against unpaid wages.",
    ]
    for i in range(24):
        rows.append(
            {
                "event_id": f"PY{i:04d}",
                "country": "Testland",
                "event_date": None,
                "notes": notes[i % 4],
                "true_label": "VBEPRS"[i % 6],
                "actor_raw": "actor",
                "actor_group": ["State", "NonState"][i % 2],
                "notes_length": len(notes[i % 4]),
            }
        )
    corpus.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

    report_path = caudit.run_pipeline(
        {
            "country": "Testland",
            "models": ["m-a", "m-b"],
            "strategy": "explainable",
            "endpoint": "mock-text:",
            "seed": 5,
            "n_boot": 100,
            "n_perm": 100,
            "corpus": str(corpus),
            "out": str(tmp_path / "results"),
            "parallelism": 2,
        }
    )
    report = json.loads(open(report_path).read())
    assert "fragments" in report
    assert any(key.endswith("legitbias.json") for key in report["fragments"])
