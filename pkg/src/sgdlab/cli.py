"""Command-line entry point ``lab``: run, compare, verify-assumptions, fit-rate.

Exit codes: 0 when every requested check passed, 1 when a check failed or
every run diverged, 2 for config and usage errors, 3 for I/O errors.
All floats are written with 17 significant digits, so outputs are
byte-stable for a given config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .assumptions import build_assumption_report
from .config import ConfigError, ExperimentConfig, load_config
from .core import LabError, Outcome
from .diagnostics.engine import AllDivergedError, RunSpec, simulate_ensemble
from .diagnostics.lemmas import lemma_suite
from .diagnostics.rates import fit_decay_exponent, loglog_slope, time_average_curve
from .optimizers import Algorithm

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
METRICS = ("decay_exponent", "final_dist_J", "time_average_slope")
TRAJECTORY_COLUMNS = ("n", "mean_g", "q10_g", "q50_g", "q90_g", "mean_grad_sq", "mean_dist_J")


def format_float(x) -> str:
    return "%.17g" % x


def dumps_json(obj, indent: int = 2) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become null."""
    return _encode(obj, 0, indent) + "\n"


def _encode(obj, level, indent):
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_encode(v, level + 1, indent)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [inner + _encode(v, level + 1, indent) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def build_spec(cfg: ExperimentConfig) -> RunSpec:
    objective = cfg.build_objective()
    return RunSpec(objective, cfg.build_oracle(objective), cfg.algorithm, cfg.hyper, cfg.horizon,
                   np.array(cfg.theta1), None if cfg.v0 is None else np.array(cfg.v0), cfg.stride)


def _steps(cfg: ExperimentConfig):
    return cfg.hyper.step_sizes(cfg.algorithm, 1, cfg.horizon + 2)


@dataclass
class Outcomes:
    """Everything one ``run`` produces, before it is written out."""

    summary: Optional[object]
    header: tuple
    rows: list
    document: dict
    failures: list = field(default_factory=list)


def trajectory_rows(summary, algorithm: Algorithm):
    last = "mean_S" if algorithm.is_adagrad else "mean_v_sq"
    header = TRAJECTORY_COLUMNS + (last,)
    if summary is None:
        return header, []
    m, q10, q50, q90 = summary.mean, summary.q10, summary.q50, summary.q90
    cols = [m["g"], q10["g"], q50["g"], q90["g"], m["grad_sq"], m["dist"],
            m["S"] if algorithm.is_adagrad else m["v_sq"]]
    rows = [[str(int(n))] + [format_float(c[k]) for c in cols] for k, n in enumerate(summary.n)]
    return header, rows


def _theorem_for(algorithm: Algorithm) -> str:
    return "thm3" if algorithm.is_adagrad else "thm1"


def execute(cfg: ExperimentConfig) -> Outcomes:
    spec = build_spec(cfg)
    ensemble = simulate_ensemble(spec, cfg.runs, cfg.seed)
    counts = {o.value: 0 for o in Outcome}
    for s in ensemble.statuses:
        counts[s.outcome.value] += 1
    failures = []
    try:
        summary = ensemble.summary()
    except AllDivergedError as exc:
        summary = None
        failures.append({"check": "ensemble", "detail": str(exc)})

    rate = None
    if not cfg.algorithm.is_adagrad:
        try:
            rate = fit_decay_exponent(summary, _steps(cfg), cfg.burn_in).to_dict() if summary else \
                {"error": "no completed runs"}
        except LabError as exc:
            rate = {"error": str(exc)}
    if "rate_fit" in cfg.checks:
        if "error" in rate:
            failures.append({"check": "rate_fit", "detail": rate["error"]})
        elif not rate["slope"] < 0:
            failures.append({"check": "rate_fit", "detail": f"slope {format_float(rate['slope'])} is not negative"})

    try:
        lemmas = lemma_suite(ensemble.records, cfg.algorithm, g_star=spec.objective.infimum,
                             **cfg.lemma).to_dict()
    except LabError as exc:
        lemmas = {"error": str(exc)}
    selection = cfg.lemma_selection
    if selection:
        if "error" in lemmas:
            failures.append({"check": "lemmas", "detail": lemmas["error"]})
        else:
            for c in lemmas["checks"]:
                if c["name"] in selection and c["status"] != "pass":
                    failures.append({"check": c["name"], "detail": f"{c['status']}: {c['detail']}"})

    report = build_assumption_report(spec.objective, spec.oracle, cfg.algorithm, cfg.hyper, cfg.seed)
    if "assumptions" in cfg.checks:
        thm = _theorem_for(cfg.algorithm)
        if not report.theorems[thm]:
            failures.append({"check": "assumptions", "detail": f"{thm}: " + "; ".join(report.reasons[thm])})

    document = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "status_counts": counts,
        "rate_fit": rate,
        "lemmas": lemmas,
        "assumptions": report.to_dict(),
        "requested_checks": list(cfg.checks),
        "passed": not failures,
        "failures": failures,
    }
    header, rows = trajectory_rows(summary, cfg.algorithm)
    return Outcomes(summary, header, rows, document, failures)


def run_experiment(cfg: ExperimentConfig, out_dir) -> int:
    """Simulate, write trajectory.csv and summary.json into ``out_dir``, return the exit code."""
    result = execute(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trajectory.csv", result.header, result.rows)
    (out / "summary.json").write_text(dumps_json(result.document), encoding="utf-8")
    for f in result.failures:
        print(f"FAIL {f['check']}: {f['detail']}", file=sys.stderr)
    return EXIT_FAILED if result.failures else EXIT_OK


def metric_value(cfg: ExperimentConfig, metric: str) -> float:
    if metric not in METRICS:
        raise LabError(f"unknown metric {metric!r}; expected one of {METRICS}")
    summary = simulate_ensemble(build_spec(cfg), cfg.runs, cfg.seed).summary()
    if metric == "decay_exponent":
        if cfg.algorithm.is_adagrad:
            raise LabError("decay_exponent needs a step-size schedule; AdaGrad has none")
        return fit_decay_exponent(summary, _steps(cfg), cfg.burn_in).slope
    if metric == "final_dist_J":
        return float(summary.mean["dist"][-1])
    T, curve = time_average_curve(summary)
    return loglog_slope(T, curve, cfg.burn_in)


def _mapped_columns(cfg: ExperimentConfig) -> dict:
    """Momentum and step size in mSGD terms (SHB mapped; alpha_2 is the first step where it matters)."""
    hp, algo = cfg.hyper, cfg.algorithm
    blank = {"alpha": "", "beta_1": "", "gamma_1": "", "eps_1": "", "mapped_alpha_2": "", "alpha0": ""}
    if algo is Algorithm.SGD:
        blank.update(alpha=format_float(0.0), eps_1=format_float(hp.schedule.value(1)))
    elif algo is Algorithm.MSGD:
        blank.update(alpha=format_float(hp.alpha), eps_1=format_float(hp.schedule.value(1)))
    elif algo is Algorithm.SHB:
        g1, g2, b1, b2 = hp.gamma.value(1), hp.gamma.value(2), hp.beta.value(1), hp.beta.value(2)
        blank.update(beta_1=format_float(b1), gamma_1=format_float(g1),
                     eps_1=format_float(g1 * (1.0 - b1)), mapped_alpha_2=format_float(g2 / g1 * b2))
    else:
        blank.update(alpha0=format_float(hp.alpha0))
    return blank


COMPARE_COLUMNS = ("rank", "config", "algorithm", "alpha", "beta_1", "gamma_1", "eps_1",
                   "mapped_alpha_2", "alpha0", "metric", "value")


def compare(configs: list, metric: str, labels=None) -> list:
    """Rows of the comparison table, best first (ascending metric value, stable)."""
    if len(configs) < 2:
        raise LabError("compare needs ≥ 2 configs")
    labels = labels or [str(i) for i in range(len(configs))]
    first = configs[0]
    for cfg, label in zip(configs[1:], labels[1:]):
        if (cfg.objective_id, cfg.objective_params) != (first.objective_id, first.objective_params):
            raise LabError(f"mismatched objectives: {label} uses {cfg.objective_id} "
                           f"{cfg.objective_params}, expected {first.objective_id} {first.objective_params}")
        if (cfg.oracle_kind, cfg.oracle_params) != (first.oracle_kind, first.oracle_params):
            raise LabError(f"mismatched oracles: {label} uses {cfg.oracle_kind}, expected {first.oracle_kind}")
    values = [metric_value(cfg, metric) for cfg in configs]
    order = sorted(range(len(configs)), key=lambda i: values[i])
    rows = []
    for rank, i in enumerate(order, start=1):
        cols = _mapped_columns(configs[i])
        rows.append({"rank": str(rank), "config": labels[i], "algorithm": configs[i].algorithm.value,
                     **cols, "metric": metric, "value": format_float(values[i])})
    return rows


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Momentum SGD and AdaGrad convergence experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi=False):
        if multi:
            p.add_argument("--config", action="append", required=True, metavar="PATH",
                           help="experiment config (repeat for each config)")
        else:
            p.add_argument("--config", required=True, metavar="PATH", help="experiment config (YAML)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--runs", type=int, help="override the config run count")

    common(sub.add_parser("run", help="simulate an ensemble and write trajectory.csv and summary.json"))
    p = sub.add_parser("compare", help="rank several configs by a convergence metric")
    common(p, multi=True)
    p.add_argument("--metric", choices=METRICS, default="decay_exponent")
    common(sub.add_parser("verify-assumptions", help="estimate the assumption constants"))
    common(sub.add_parser("fit-rate", help="fit the decay exponent against the cumulative step size"))
    return parser


def _load(path, args) -> ExperimentConfig:
    return load_config(path).with_overrides(seed=args.seed, runs=args.runs)


def _emit(text: str, out: Optional[str], name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / name).write_text(text, encoding="utf-8")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(_load(args.config, args), args.out or "results")
        if args.command == "compare":
            configs = [_load(p, args) for p in args.config]
            rows = compare(configs, args.metric, labels=list(args.config))
            if args.out is None:
                w = csv.DictWriter(sys.stdout, COMPARE_COLUMNS, lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
            else:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                write_csv(Path(args.out) / "compare.csv", COMPARE_COLUMNS,
                          [[r[c] for c in COMPARE_COLUMNS] for r in rows])
            return EXIT_OK
        cfg = _load(args.config, args)
        if args.command == "verify-assumptions":
            spec = build_spec(cfg)
            report = build_assumption_report(spec.objective, spec.oracle, cfg.algorithm, cfg.hyper, cfg.seed)
            _emit(dumps_json(report.to_dict()), args.out, "assumptions.json")
            return EXIT_OK if report.theorems[_theorem_for(cfg.algorithm)] else EXIT_FAILED
        if cfg.algorithm.is_adagrad:
            raise ConfigError("algorithm", "fit-rate needs a step-size schedule; AdaGrad has none")
        summary = simulate_ensemble(build_spec(cfg), cfg.runs, cfg.seed).summary()
        fit = fit_decay_exponent(summary, _steps(cfg), cfg.burn_in)
        _emit(dumps_json(fit.to_dict()), args.out, "rate_fit.json")
        return EXIT_OK if fit.slope < 0 else EXIT_FAILED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AllDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
