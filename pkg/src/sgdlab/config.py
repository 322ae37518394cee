"""Experiment configuration: a YAML document validated into :class:`ExperimentConfig`.

Grammar (keys not listed here are rejected)::

    objective: quad                      # or {id: quad, params: {c: 1.0, dim: 1}}
    oracle: exact                        # or {kind: additive_gaussian, sigma: 0.1}
    algorithm: msgd                      # sgd | msgd | shb | adagrad_norm | adagrad_coord
    hyper:
      schedule: {family: power, c0: 0.5, gamma: 1.0, n0: 0}   # sgd, msgd
      alpha: 0.9                                                # msgd
      beta: 0.9                          # shb; number or schedule mapping
      gamma: {family: power, c0: 0.5}    # shb
      alpha0: 0.5                        # adagrad_*
    horizon: 100000
    runs: 100                            # default 100
    seed: 0                              # default 0
    stride: 10                           # default max(1, horizon // 10000)
    theta1: [0.8]                        # default all ones
    v0: [0.0]                            # momentum methods only
    burn_in: 0.1
    checks: [lemmas, rate_fit, assumptions]   # or individual lemma names L1, L5, ...
    lemma: {bound_factor: 10, tail_fraction: 0.5, threshold: 0.05}

JSON is valid YAML, so the config echo written into summary.json parses back
to an equal config. The output directory is not part of the config; it is
chosen per invocation with ``--out``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import yaml

from .core import LabError, StepSchedule
from .diagnostics.lemmas import ADAGRAD_CHECKS, SCHEDULE_CHECKS, applicable_checks
from .objectives import Objective, make_objective
from .optimizers import Algorithm, HyperParams
from .oracles import GradientOracle, OracleKind

TOP_KEYS = ("objective", "oracle", "algorithm", "hyper", "horizon", "runs", "seed", "stride",
            "theta1", "v0", "burn_in", "checks", "lemma")
REQUIRED = ("objective", "algorithm", "horizon")
CHECK_GROUPS = ("lemmas", "rate_fit", "assumptions")
LEMMA_KEYS = ("bound_factor", "tail_fraction", "threshold")
DEFAULT_RUNS = 100


class ConfigError(LabError):
    """A config problem; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    objective_id: str
    objective_params: dict
    oracle_kind: str
    oracle_params: dict
    algorithm: Algorithm
    hyper: HyperParams
    horizon: int
    runs: int = DEFAULT_RUNS
    seed: int = 0
    stride: int = 1
    theta1: tuple = ()
    v0: Optional[tuple] = None
    burn_in: float = 0.1
    checks: tuple = ()
    lemma: dict = field(default_factory=lambda: {"bound_factor": 10.0, "tail_fraction": 0.5,
                                                 "threshold": 0.05})

    def build_objective(self) -> Objective:
        return make_objective(self.objective_id, **self.objective_params)

    def build_oracle(self, objective: Optional[Objective] = None) -> GradientOracle:
        return GradientOracle(self.oracle_kind, objective or self.build_objective(), **self.oracle_params)

    @property
    def lemma_selection(self) -> Optional[tuple]:
        """Lemma names requested, or None when no lemma check was requested."""
        if "lemmas" in self.checks:
            return applicable_checks(self.algorithm)
        named = tuple(c for c in self.checks if c not in CHECK_GROUPS)
        return named or None

    def with_overrides(self, seed=None, runs=None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = _int("seed", seed, 0)
        if runs is not None:
            kw["runs"] = _int("runs", runs, 2)
        return replace(self, **kw)

    def to_dict(self) -> dict:
        """Canonical document; ``parse_config`` of it gives back an equal config."""
        hyper = {}
        hp = self.hyper
        if hp.schedule is not None:
            hyper["schedule"] = hp.schedule.to_dict()
        if hp.alpha is not None:
            hyper["alpha"] = hp.alpha
        if hp.beta is not None:
            hyper["beta"] = hp.beta.to_dict()
        if hp.gamma is not None:
            hyper["gamma"] = hp.gamma.to_dict()
        if hp.alpha0 is not None:
            hyper["alpha0"] = hp.alpha0
        doc = {
            "objective": {"id": self.objective_id, "params": dict(self.objective_params)},
            "oracle": {"kind": self.oracle_kind, **self.oracle_params},
            "algorithm": self.algorithm.value,
            "hyper": hyper,
            "horizon": self.horizon,
            "runs": self.runs,
            "seed": self.seed,
            "stride": self.stride,
            "theta1": list(self.theta1),
        }
        if self.v0 is not None:
            doc["v0"] = list(self.v0)
        doc.update(burn_in=self.burn_in, checks=list(self.checks), lemma=dict(self.lemma))
        return doc


def _int(key, value, lo):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if value < lo:
        raise ConfigError(key, f"must be >= {lo}")
    return int(value)


def _float(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    return float(value)


def _mapping(key, value):
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(key, doc, allowed):
    extra = [k for k in doc if k not in allowed]
    if extra:
        where = f"{key}.{extra[0]}" if key else str(extra[0])
        raise ConfigError(where, f"unknown key (allowed: {', '.join(allowed)})")


def _schedule(key, value) -> StepSchedule:
    if not isinstance(value, dict):
        return StepSchedule.constant(_float(key, value))
    _reject_unknown(key, value, ("family", "c0", "gamma", "n0"))
    family = value.get("family", "power")
    if "c0" not in value:
        raise ConfigError(f"{key}.c0", "required")
    c0 = _float(f"{key}.c0", value["c0"])
    try:
        if family == "constant":
            if "gamma" in value or "n0" in value:
                raise ConfigError(key, "a constant schedule takes only c0")
            return StepSchedule.constant(c0)
        if family == "power":
            return StepSchedule.power(c0, _float(f"{key}.gamma", value.get("gamma", 1.0)),
                                      _int(f"{key}.n0", value.get("n0", 0), 0))
    except ConfigError:
        raise
    except LabError as exc:
        raise ConfigError(key, str(exc)) from None
    raise ConfigError(f"{key}.family", f"unknown schedule family {family!r}")


def _vector(key, value, dim):
    try:
        arr = np.array(value, dtype=np.float64, ndmin=1)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a list of numbers, got {value!r}") from None
    if arr.ndim != 1 or arr.size != dim:
        raise ConfigError(key, f"expected {dim} coordinates")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(key, "coordinates must be finite")
    return tuple(float(x) for x in arr)


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"malformed YAML: {exc}") from None
    return config_from_dict(doc)


def config_from_dict(doc) -> ExperimentConfig:
    doc = _mapping("<document>", doc)
    _reject_unknown("", doc, TOP_KEYS)
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(key, "required")

    obj_doc = doc["objective"]
    if isinstance(obj_doc, str):
        obj_doc = {"id": obj_doc}
    obj_doc = _mapping("objective", obj_doc)
    _reject_unknown("objective", obj_doc, ("id", "params"))
    if "id" not in obj_doc:
        raise ConfigError("objective.id", "required")
    obj_params = dict(_mapping("objective.params", obj_doc.get("params") or {}))
    try:
        objective = make_objective(obj_doc["id"], **obj_params)
    except LabError as exc:
        raise ConfigError("objective", str(exc)) from None
    obj_params = dict(objective.params)

    oracle_doc = doc.get("oracle", "exact")
    if isinstance(oracle_doc, str):
        oracle_doc = {"kind": oracle_doc}
    oracle_doc = dict(_mapping("oracle", oracle_doc))
    _reject_unknown("oracle", oracle_doc, ("kind", "sigma"))
    kind = oracle_doc.pop("kind", "exact")
    if kind not in [k.value for k in OracleKind]:
        raise ConfigError("oracle.kind", f"unknown oracle {kind!r}")
    if "sigma" in oracle_doc:
        oracle_doc["sigma"] = _float("oracle.sigma", oracle_doc["sigma"])
    try:
        GradientOracle(kind, objective, **oracle_doc)
    except LabError as exc:
        raise ConfigError("oracle", str(exc)) from None

    try:
        algorithm = Algorithm(doc["algorithm"])
    except ValueError:
        raise ConfigError("algorithm", f"unknown algorithm {doc['algorithm']!r}; expected one of "
                          f"{[a.value for a in Algorithm]}") from None

    hyper_doc = _mapping("hyper", doc.get("hyper") or {})
    _reject_unknown("hyper", hyper_doc, ("schedule", "alpha", "beta", "gamma", "alpha0"))
    kw = {}
    for name in ("schedule", "beta", "gamma"):
        if name in hyper_doc:
            kw[name] = _schedule(f"hyper.{name}", hyper_doc[name])
    for name in ("alpha", "alpha0"):
        if name in hyper_doc:
            kw[name] = _float(f"hyper.{name}", hyper_doc[name])
    try:
        hyper = HyperParams(**kw)
        hyper.validate_for(algorithm)
    except LabError as exc:
        # HyperParams messages start with the field name
        msg = str(exc)
        field_name = msg.split()[0].rstrip(":")
        raise ConfigError(f"hyper.{field_name}", msg.split(": ", 1)[-1]) from None

    horizon = _int("horizon", doc["horizon"], 1)
    runs = _int("runs", doc.get("runs", DEFAULT_RUNS), 2)
    seed = _int("seed", doc.get("seed", 0), 0)
    stride = _int("stride", doc.get("stride", max(1, horizon // 10_000)), 1)
    theta1 = _vector("theta1", doc.get("theta1", [1.0] * objective.dimension), objective.dimension)
    v0 = None
    if doc.get("v0") is not None:
        if algorithm not in (Algorithm.MSGD, Algorithm.SHB):
            raise ConfigError("v0", f"not used by {algorithm.value}")
        v0 = _vector("v0", doc["v0"], objective.dimension)
    burn_in = _float("burn_in", doc.get("burn_in", 0.1))
    if not 0.0 <= burn_in < 1.0:
        raise ConfigError("burn_in", "must lie in [0,1)")

    checks = doc.get("checks") or []
    if not isinstance(checks, list):
        raise ConfigError("checks", "expected a list")
    valid = set(CHECK_GROUPS) | set(applicable_checks(algorithm))
    for c in checks:
        if c not in valid:
            other = set(SCHEDULE_CHECKS + ADAGRAD_CHECKS) - set(applicable_checks(algorithm))
            why = f"does not apply to {algorithm.value}" if c in other else "unknown check"
            raise ConfigError("checks", f"{c!r} {why}")
    if "rate_fit" in checks and algorithm.is_adagrad:
        raise ConfigError("checks", "rate_fit needs a step-size schedule; AdaGrad has none")
    if len(set(checks)) != len(checks):
        raise ConfigError("checks", "duplicate entries")

    lemma_doc = _mapping("lemma", doc.get("lemma") or {})
    _reject_unknown("lemma", lemma_doc, LEMMA_KEYS)
    lemma = {"bound_factor": 10.0, "tail_fraction": 0.5, "threshold": 0.05}
    for key, value in lemma_doc.items():
        lemma[key] = _float(f"lemma.{key}", value)
    if not 0.0 < lemma["tail_fraction"] < 1.0:
        raise ConfigError("lemma.tail_fraction", "must lie in (0,1)")

    return ExperimentConfig(obj_doc["id"], obj_params, kind, oracle_doc, algorithm, hyper, horizon,
                            runs, seed, stride, theta1, v0, burn_in, tuple(checks), lemma)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
