"""Empirical estimates of the constants c, M, M', a and s, and theorem applicability.

Max-type estimates (c, M) and the min-type estimate of s are one-sided
bounds from finite samples; they can expose a violated assumption but never
certify one. For oracles with finitely many equally likely outcomes (exact,
finite-sum) the per-point moments are computed by enumeration instead of
Monte Carlo, so those estimates carry zero sampling error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .core import LabError, RngStream, rng_substream, schedule_validate
from .objectives import Objective
from .optimizers import Algorithm, HyperParams
from .oracles import GradientOracle, OracleKind

# substream ids for estimator randomness, disjoint from run indices
_LIPSCHITZ_STREAM = 2**63
_M_STREAM = 2**63 + 1
_MPRIME_STREAM = 2**63 + 2
_PL_STREAM = 2**63 + 3


@dataclass(frozen=True)
class Estimate:
    value: float
    samples: int
    region: tuple
    stderr: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples,
                "region": list(self.region), "note": self.note}


def _region(obj: Objective, region):
    lo, hi = obj.window if region is None else region
    if not hi > lo:
        raise LabError(f"degenerate sampling region {(lo, hi)}")
    return float(lo), float(hi)


def _uniform_points(rng: RngStream, k: int, dim: int, region) -> np.ndarray:
    lo, hi = region
    return lo + (hi - lo) * rng.uniform((k, dim))


def estimate_lipschitz(obj: Objective, region=None, pairs: int = 10_000,
                       rng: Optional[RngStream] = None) -> Estimate:
    """Largest sampled |grad g(x) - grad g(y)| / |x - y| over uniform pairs in the region."""
    if pairs < 1000:
        raise LabError("estimate_lipschitz needs >= 1000 pairs")
    region = _region(obj, region)
    rng = rng or rng_substream(0, _LIPSCHITZ_STREAM)
    x = _uniform_points(rng, pairs, obj.dimension, region)
    y = _uniform_points(rng, pairs, obj.dimension, region)
    dx = np.sqrt(np.sum((x - y) ** 2, axis=-1))
    keep = dx >= 1e-6
    dg = np.sqrt(np.sum((obj.grad(x[keep]) - obj.grad(y[keep])) ** 2, axis=-1))
    note = "window-restricted" if obj.lipschitz_window_only else ""
    return Estimate(float(np.max(dg / dx[keep])), int(keep.sum()), region, note=note)


def _anchor_points(obj: Objective) -> np.ndarray:
    return np.stack([c.anchor for c in obj.metadata.components])


def _moments(oracle: GradientOracle, theta: np.ndarray, rng: RngStream, k: int):
    """Per-point E|sample - grad|^2 and E|sample|^2 with standard errors."""
    g = oracle.objective.grad(theta)
    if oracle.enumerable:
        s = oracle.outcomes(theta)
        return (float(np.mean(np.sum((s - g) ** 2, axis=-1))), 0.0,
                float(np.mean(np.sum(s * s, axis=-1))), 0.0)
    s = oracle.sample_many(theta, rng, k)
    dev = np.sum((s - g) ** 2, axis=-1)
    sq = np.sum(s * s, axis=-1)
    root_k = np.sqrt(k)
    return (float(dev.mean()), float(dev.std(ddof=1) / root_k),
            float(sq.mean()), float(sq.std(ddof=1) / root_k))


def estimate_noise_M(oracle: GradientOracle, obj: Optional[Objective] = None, points: int = 20,
                     samples_per_point: int = 1000, rng: Optional[RngStream] = None,
                     region=None) -> Estimate:
    """Max over sampled points of E|grad g(theta, xi) - grad g(theta)|^2 / (1 + g(theta)).

    The points are the stationary-component anchors (where g is extreme)
    plus ``points`` uniform draws from the region.
    """
    obj = obj or oracle.objective
    if samples_per_point < 1000:
        raise LabError("estimate_noise_M needs >= 1000 samples per point")
    region = _region(obj, region)
    rng = rng or rng_substream(0, _M_STREAM)
    pts = np.concatenate([_anchor_points(obj), _uniform_points(rng, points, obj.dimension, region)])
    best, best_se = -np.inf, 0.0
    for theta in pts:
        dev, dev_se, _, _ = _moments(oracle, theta, rng, samples_per_point)
        scale = 1.0 + float(obj.value(theta))
        if dev / scale > best:
            best, best_se = dev / scale, dev_se / scale
    return Estimate(best, len(pts) * (1 if oracle.enumerable else samples_per_point), region, best_se)


@dataclass(frozen=True)
class MprimeFit:
    M_prime: float
    a: float
    M_prime_stderr: float
    a_stderr: float
    points: int
    samples_per_point: int
    region: tuple
    violations: int

    def to_dict(self) -> dict:
        return {"M_prime": self.M_prime, "a": self.a, "M_prime_stderr": self.M_prime_stderr,
                "a_stderr": self.a_stderr, "points": self.points,
                "samples_per_point": self.samples_per_point, "region": list(self.region),
                "violations": self.violations}


def estimate_Mprime_a(oracle: GradientOracle, obj: Optional[Objective] = None, points: int = 40,
                      samples_per_point: int = 1000, rng: Optional[RngStream] = None,
                      region=None) -> MprimeFit:
    """Least-squares line E|grad g(theta, xi)|^2 ~ M' |grad g(theta)|^2 + a over sampled points.

    The design points are the stationary-component anchors (where the
    gradient vanishes, pinning the intercept) plus ``points`` uniform draws.
    Monte Carlo moments are fit by weighted least squares using their
    standard errors; enumerated (exact) moments use ordinary least squares.
    """
    obj = obj or oracle.objective
    if points < 20:
        raise LabError("estimate_Mprime_a needs >= 20 points")
    region = _region(obj, region)
    rng = rng or rng_substream(0, _MPRIME_STREAM)
    pts = np.concatenate([_anchor_points(obj), _uniform_points(rng, points, obj.dimension, region)])
    x = np.sum(obj.grad(pts) ** 2, axis=-1)
    if np.ptp(x) == 0.0:
        raise LabError("rank-deficient design: all sampled |grad g|^2 are equal")
    y = np.empty(len(pts))
    se = np.empty(len(pts))
    for i, theta in enumerate(pts):
        _, _, y[i], se[i] = _moments(oracle, theta, rng, samples_per_point)
    if np.all(se > 0):
        slope, intercept, slope_se, intercept_se = _weighted_line(x, y, se)
    else:
        res = stats.linregress(x, y)
        slope, intercept = res.slope, res.intercept
        slope_se, intercept_se = res.stderr, res.intercept_stderr
    resid = y - (slope * x + intercept)
    tol = np.maximum(3.0 * se, 1e-9 * (1.0 + np.abs(y)))
    return MprimeFit(float(slope), float(intercept), float(slope_se), float(intercept_se),
                     len(pts), samples_per_point, region, int(np.sum(resid > tol)))


def _weighted_line(x, y, se):
    """Line fit weighted by 1/se^2; the spread of |sample|^2 grows with |grad g|^2."""
    w = 1.0 / se
    design = np.stack([x * w, w], axis=1)
    coef, *_ = np.linalg.lstsq(design, y * w, rcond=None)
    cov = np.linalg.inv(design.T @ design)
    return coef[0], coef[1], np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1])


def estimate_local_pl_s(obj: Objective, component: int, radius: float = 0.1, samples: int = 1000,
                        rng: Optional[RngStream] = None) -> Estimate:
    """Smallest sampled |grad g|^2 / |g - g_i| at distances in (1e-4, radius) from component i."""
    comps = obj.metadata.components
    if not 0 <= component < len(comps):
        raise LabError(f"{obj.id} has no component {component}")
    if not 0.0 < radius <= 0.5:
        raise LabError("radius must lie in (0, 0.5]")
    if samples < 1000:
        raise LabError("estimate_local_pl_s needs >= 1000 samples")
    rng = rng or rng_substream(0, _PL_STREAM)
    comp = comps[component]
    if comp.descriptor == "interval":
        raise LabError("local P-L sampling supports point and lattice components")
    direction = rng.standard_normal((samples, obj.dimension))
    direction /= np.sqrt(np.sum(direction**2, axis=-1, keepdims=True))
    r = 1e-4 + (radius - 1e-4) * rng.uniform(samples)
    theta = comp.anchor + r[:, None] * direction
    gsq = np.sum(obj.grad(theta) ** 2, axis=-1)
    ratio = gsq / np.abs(obj.value(theta) - comp.value)
    lo = comp.anchor - radius
    return Estimate(float(np.min(ratio)), samples, (float(lo.min()), float((comp.anchor + radius).max())))


@dataclass
class AssumptionReport:
    lipschitz: Estimate
    M: Estimate
    Mprime_a: MprimeFit
    s_per_component: list
    s_min: float
    schedule: Optional[dict]
    theorems: dict
    reasons: dict
    s_within_lipschitz_bound: bool
    extra: dict = field(default_factory=dict)

    @property
    def applicable(self) -> dict:
        return dict(self.theorems)

    def to_dict(self) -> dict:
        return {
            "lipschitz_hat": self.lipschitz.to_dict(),
            "M_hat": self.M.to_dict(),
            "M_prime_a_hat": self.Mprime_a.to_dict(),
            "s_hat": [e.to_dict() for e in self.s_per_component],
            "s_hat_min": self.s_min,
            "s_hat_min_le_2c": self.s_within_lipschitz_bound,
            "schedule": self.schedule,
            "theorems": dict(self.theorems),
            "reasons": {k: list(v) for k, v in self.reasons.items()},
        }


def build_assumption_report(objective: Objective, oracle: GradientOracle, algorithm, hyper: HyperParams,
                            base_seed: int = 0, *, pairs: int = 10_000, points: int = 20,
                            samples_per_point: int = 1000, pl_radius: float = 0.1,
                            pl_samples: int = 1000) -> AssumptionReport:
    algorithm = Algorithm(algorithm)
    lip = estimate_lipschitz(objective, pairs=pairs, rng=rng_substream(base_seed, _LIPSCHITZ_STREAM))
    M = estimate_noise_M(oracle, objective, points, samples_per_point,
                         rng_substream(base_seed, _M_STREAM))
    mfit = estimate_Mprime_a(oracle, objective, max(points, 20), samples_per_point,
                             rng_substream(base_seed, _MPRIME_STREAM))
    s_list = [estimate_local_pl_s(objective, i, pl_radius, pl_samples,
                                  rng_substream(base_seed, _PL_STREAM + i))
              for i in range(len(objective.metadata.components))]
    s_min = min(e.value for e in s_list)

    reasons = {"thm1": [], "thm2": [], "thm3": []}
    sched = None
    if algorithm in (Algorithm.SGD, Algorithm.MSGD):
        rep = schedule_validate(hyper.schedule)
        sched = rep.to_dict()
        if not rep.sum_diverges:
            reasons["thm1"].append("sum of eps_n converges")
        if not rep.sum_sq_converges:
            reasons["thm1"].append("sum of eps_n^2 diverges")
        alpha = hyper.alpha if algorithm is Algorithm.MSGD else 0.0
        if not 0.0 <= alpha < 1.0:
            reasons["thm1"].append("alpha outside [0,1)")
    elif algorithm is Algorithm.SHB:
        sched = schedule_validate(hyper.gamma).to_dict()
        reasons["thm1"].append("SHB maps to mSGD with time-varying momentum, not a static alpha")
    else:
        reasons["thm1"].append(f"algorithm {algorithm.value} is not (momentum) SGD")
    if not np.isfinite(M.value):
        reasons["thm1"].append("M estimate not finite")
    thm1 = not reasons["thm1"]

    reasons["thm2"] = list(reasons["thm1"])
    if oracle.kind is not OracleKind.FINITE_SUM_UNIFORM:
        reasons["thm2"].append("oracle is not uniform sampling over a finite sum")
    if not s_min > 0:
        reasons["thm2"].append("local P-L constant not positive")
    thm2 = not reasons["thm2"]

    if not algorithm.is_adagrad:
        reasons["thm3"].append(f"algorithm {algorithm.value} is not AdaGrad")
    elif algorithm is Algorithm.ADAGRAD_COORD and objective.dimension > 1:
        reasons["thm3"].append("coordinate-wise AdaGrad is covered only in 1-D, where it equals the norm form")
    if not (np.isfinite(mfit.M_prime) and np.isfinite(mfit.a)):
        reasons["thm3"].append("M' or a estimate not finite")
    thm3 = not reasons["thm3"]

    return AssumptionReport(lip, M, mfit, s_list, s_min, sched,
                            {"thm1": thm1, "thm2": thm2, "thm3": thm3}, reasons,
                            bool(s_min <= 2.0 * lip.value + 1e-3))
