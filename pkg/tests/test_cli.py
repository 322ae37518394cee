import csv
import json
import math

import pytest

from sgdlab.cli import compare, dumps_json, format_float, main
from sgdlab.config import parse_config

EXACT_SGD = """
objective: quad
algorithm: sgd
hyper: {schedule: 0.5}
horizon: 40
runs: 3
"""

DIVERGENT = """
objective: quad
algorithm: sgd
hyper: {schedule: 3.0}
horizon: 1000
runs: 5
checks: [lemmas]
"""

GAUSS_MSGD = """
objective: quad
oracle: {kind: additive_gaussian, sigma: 0.1}
algorithm: msgd
hyper: {schedule: {family: power, c0: 0.5, gamma: 1.0}, alpha: ALPHA}
horizon: 2000
runs: 10
seed: 1
checks: [lemmas, rate_fit]
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestFormatting:
    def test_float_round_trip(self):
        for x in (0.1, 1 / 3, 1e-300, 2.0**-1074, 12345678.9):
            assert float(format_float(x)) == x

    def test_json_nonfinite_is_null(self):
        doc = json.loads(dumps_json({"a": math.nan, "b": [math.inf, 1.5], "c": None, "d": True}))
        assert doc == {"a": None, "b": [None, 1.5], "c": None, "d": True}


class TestRun:
    def test_exact_sgd_closed_form(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", write(tmp_path, "c.yaml", EXACT_SGD), "--out", str(out)]) == 0
        rows = read_csv(out / "trajectory.csv")
        assert rows[0] == ["n", "mean_g", "q10_g", "q50_g", "q90_g", "mean_grad_sq", "mean_dist_J", "mean_v_sq"]
        assert len(rows) == 42
        for r in rows[1:]:
            n = int(r[0])
            assert abs(float(r[1]) - 0.5 * 0.25 ** (n - 1)) <= 1e-12
            assert abs(float(r[6]) - 0.5 ** (n - 1)) <= 1e-12
        summary = json.loads((out / "summary.json").read_text())
        assert summary["passed"] and summary["failures"] == []
        assert summary["status_counts"]["completed"] == 3
        assert parse_config(json.dumps(summary["config"])) == parse_config(EXACT_SGD)

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", GAUSS_MSGD.replace("ALPHA", "0.5"))
        for d in ("a", "b"):
            assert main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == 0
        for name in ("trajectory.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", GAUSS_MSGD.replace("ALPHA", "0.5"))
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2", "--runs", "4"])
        doc = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert doc["seed"] == 2 and doc["config"]["runs"] == 4
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()

    def test_divergent_lemmas_fail(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", write(tmp_path, "c.yaml", DIVERGENT), "--out", str(out)]) == 1
        doc = json.loads((out / "summary.json").read_text())
        assert not doc["passed"]
        assert "L1" in [f["check"] for f in doc["failures"]]
        assert doc["status_counts"]["diverged"] == 5
        assert len(read_csv(out / "trajectory.csv")) == 1
        assert "FAIL L1" in capsys.readouterr().err

    def test_adagrad_last_column(self, tmp_path):
        text = "objective: sin2\noracle: {kind: additive_gaussian, sigma: 0.1}\nalgorithm: adagrad_norm\n" \
               "hyper: {alpha0: 0.5}\nhorizon: 300\nruns: 3\ntheta1: [0.8]\nchecks: [lemmas]\n"
        out = tmp_path / "out"
        main(["run", "--config", write(tmp_path, "c.yaml", text), "--out", str(out)])
        assert read_csv(out / "trajectory.csv")[0][-1] == "mean_S"
        doc = json.loads((out / "summary.json").read_text())
        assert doc["rate_fit"] is None
        assert [c["name"] for c in doc["lemmas"]["checks"]] == ["L8", "L9", "L10"]


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.yaml", "objective: quad\nalgorithm: msgd\nhyper: {schedule: 0.1, alpha: 1}\n"
                                        "horizon: 10\n")
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "alpha must lie in [0,1)" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 3

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["bogus"])
        assert info.value.code == 2

    def test_fit_rate_rejects_adagrad(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", "objective: quad\nalgorithm: adagrad_norm\nhyper: {alpha0: 1}\nhorizon: 10\n")
        assert main(["fit-rate", "--config", cfg]) == 2


class TestSubcommands:
    def test_fit_rate_stdout(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.yaml", GAUSS_MSGD.replace("ALPHA", "0.5"))
        assert main(["fit-rate", "--config", cfg]) == 0
        fit = json.loads(capsys.readouterr().out)
        assert fit["slope"] < 0 and fit["points"] >= 20

    def test_verify_assumptions_file(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", GAUSS_MSGD.replace("ALPHA", "0.5"))
        assert main(["verify-assumptions", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        doc = json.loads((tmp_path / "o" / "assumptions.json").read_text())
        assert doc["theorems"]["thm1"] is True

    def test_verify_assumptions_not_covered(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", EXACT_SGD)
        assert main(["verify-assumptions", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


class TestCompare:
    def test_needs_two(self, tmp_path, capsys):
        cfg = write(tmp_path, "a.yaml", EXACT_SGD)
        assert main(["compare", "--config", cfg]) == 2
        assert "compare needs" in capsys.readouterr().err

    def test_mismatched_objectives(self):
        a = parse_config(EXACT_SGD)
        b = parse_config(EXACT_SGD.replace("quad", "sin2"))
        with pytest.raises(Exception, match="mismatched objectives"):
            compare([a, b], "final_dist_J")

    def test_ranked_best_first(self, tmp_path):
        paths = [write(tmp_path, f"a{a}.yaml", GAUSS_MSGD.replace("ALPHA", a)) for a in ("0.0", "0.5")]
        out = tmp_path / "o"
        assert main(["compare", "--config", paths[0], "--config", paths[1], "--metric", "decay_exponent",
                     "--out", str(out)]) == 0
        rows = read_csv(out / "compare.csv")
        assert rows[0][:3] == ["rank", "config", "algorithm"]
        values = [float(r[-1]) for r in rows[1:]]
        assert values == sorted(values) and [r[0] for r in rows[1:]] == ["1", "2"]

    def test_ties_keep_input_order(self):
        cfgs = [parse_config(EXACT_SGD), parse_config(EXACT_SGD)]
        rows = compare(cfgs, "final_dist_J", labels=["first", "second"])
        assert [r["config"] for r in rows] == ["first", "second"]

    def test_shb_mapped_columns(self):
        shb = parse_config("objective: quad\nalgorithm: shb\nhyper: {beta: 0.9, gamma: {family: power, c0: 0.5}}\n"
                           "horizon: 200\nruns: 2\n")
        rows = compare([shb, parse_config(EXACT_SGD)], "final_dist_J")
        r = next(r for r in rows if r["algorithm"] == "shb")
        assert float(r["eps_1"]) == pytest.approx(0.05)
        assert float(r["mapped_alpha_2"]) == pytest.approx(0.45)
