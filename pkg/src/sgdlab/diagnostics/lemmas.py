"""Finite-horizon checks of the stability and summability lemmas.

Summability claims ("this series converges a.s.") become plateau checks on
the ensemble-mean running sum: the share of the total added over the last
``tail_fraction`` of the record must stay below ``threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import LabError, Outcome
from ..optimizers import Algorithm

DIVERGED_FRACTION_LIMIT = 0.05
LEMMA9_EPS = 0.1
LEMMA10_EPS = 0.25

SCHEDULE_CHECKS = ("L1", "L5", "L6")
ADAGRAD_CHECKS = ("L8", "L9", "L10")

_NEEDS = {
    "L1": ("g",),
    "L5": ("cum_v_sq",),
    "L6": ("cum_eps_grad",),
    "L8": ("lemma8_sum",),
    "L9": ("g", "S"),
    "L10": ("grad_sq", "S"),
}


@dataclass(frozen=True)
class PlateauResult:
    passed: bool
    tail_increment_ratio: float


def plateau_check(series, tail_fraction: float = 0.5, threshold: float = 0.05) -> PlateauResult:
    s = np.asarray(series, dtype=np.float64)
    if s.size < 100:
        raise LabError(f"plateau_check needs >= 100 points, got {s.size}")
    if not 0.0 < tail_fraction < 1.0:
        raise LabError("tail_fraction must lie in (0,1)")
    if np.any(np.diff(s) < 0):
        raise LabError("plateau_check needs a nondecreasing series")
    start = s[int((1.0 - tail_fraction) * s.size)]
    ratio = float((s[-1] - start) / max(s[-1], 1e-12))
    return PlateauResult(ratio < threshold, ratio)


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "inconclusive"
    value: float = float("nan")
    threshold: float = float("nan")
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "value": self.value,
                "threshold": self.threshold, "detail": self.detail}


@dataclass
class LemmaReport:
    checks: dict = field(default_factory=dict)
    runs: int = 0
    diverged: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def failures(self) -> list:
        return [c for c in self.checks.values() if not c.passed]

    def to_dict(self) -> dict:
        return {"runs": self.runs, "diverged": self.diverged, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks.values()]}


def applicable_checks(kind) -> tuple:
    return ADAGRAD_CHECKS if Algorithm(kind).is_adagrad else SCHEDULE_CHECKS


def _ensemble_mean(records, name):
    return np.mean(np.stack([r[name] for r in records]), axis=0)


def _ratio_mean(records, num_name, power, offset=0.0):
    """Per-run ``(num - offset) / S^power`` on rows with S > 0, averaged across runs."""
    num = np.stack([r[num_name] for r in records]) - offset
    S = np.stack([r["S"] for r in records])
    ratio = np.divide(num, S**power, out=np.full(S.shape, np.nan), where=S > 0)
    with np.errstate(invalid="ignore"):
        cols = ~np.all(np.isnan(ratio), axis=0)
    return np.nanmean(ratio[:, cols], axis=0) if cols.any() else np.array([])


def lemma_suite(records, kind, *, g_star: float = 0.0, bound_factor: float = 10.0,
                tail_fraction: float = 0.5, threshold: float = 0.05, select=None) -> LemmaReport:
    """Run the lemma checks that apply to ``kind`` over an ensemble of records.

    Diverged records are reported, not averaged. When more than 5% of runs
    diverged, every check is inconclusive except L1, which fails if a
    diverged run pushed g past the L1 bound.
    """
    kind = Algorithm(kind)
    names = applicable_checks(kind)
    if select is not None:
        unknown = set(select) - set(names)
        if unknown:
            raise LabError(f"checks {sorted(unknown)} do not apply to {kind.value}")
        names = tuple(n for n in names if n in select)
    records = list(records)
    if not records:
        raise LabError("lemma_suite needs at least one record")
    for name in names:
        for series in _NEEDS[name]:
            if series not in records[0].series:
                raise LabError(f"{name} needs series {series!r}, missing for {kind.value} records")

    done = [r for r in records if r.status.outcome is not Outcome.DIVERGED]
    bad = [r for r in records if r.status.outcome is Outcome.DIVERGED]
    report = LemmaReport(runs=len(records), diverged=len(bad))
    g0 = float(np.mean([r["g"][0] for r in records]))
    bound = bound_factor * (1.0 + g0)

    if len(bad) > DIVERGED_FRACTION_LIMIT * len(records):
        why = f"{len(bad)}/{len(records)} runs diverged"
        for name in names:
            if name == "L1":
                peak = max(float(np.nanmax(r["g"])) for r in bad)
                status = "fail" if peak > bound else "inconclusive"
                report.checks[name] = CheckResult(name, status, peak, bound, why)
            else:
                report.checks[name] = CheckResult(name, "inconclusive", detail=why)
        return report

    plateau = dict(tail_fraction=tail_fraction, threshold=threshold)
    for name in names:
        if name == "L1":
            peak = float(np.max(_ensemble_mean(done, "g")))
            report.checks[name] = CheckResult(name, "pass" if peak <= bound else "fail", peak, bound,
                                              "max over n of mean g")
        elif name in ("L5", "L6", "L8"):
            series = {"L5": "cum_v_sq", "L6": "cum_eps_grad", "L8": "lemma8_sum"}[name]
            res = plateau_check(_ensemble_mean(done, series), **plateau)
            report.checks[name] = CheckResult(name, "pass" if res.passed else "fail",
                                              res.tail_increment_ratio, threshold,
                                              f"tail increment of mean {series}")
        elif name == "L9":
            r = _ratio_mean(done, "g", LEMMA9_EPS, g_star)
            report.checks[name] = _not_trending_up(name, r)
        elif name == "L10":
            r = _ratio_mean(done, "grad_sq", LEMMA10_EPS)
            report.checks[name] = _decays(name, r)
    return report


def _not_trending_up(name, r):
    if r.size == 0:
        return CheckResult(name, "pass", 0.0, detail="accumulator never positive")
    if not np.all(np.isfinite(r)):
        return CheckResult(name, "fail", float("inf"), detail="ratio not finite")
    half = r.size // 2
    first, last = float(np.max(r[:half] if half else r)), float(np.max(r[half:]))
    status = "pass" if last <= first else "fail"
    return CheckResult(name, status, last, first, "max over last half vs first half of (g - g*)/S^0.1")


def _decays(name, r):
    if r.size == 0:
        return CheckResult(name, "pass", 0.0, detail="accumulator never positive")
    tenth = max(1, r.size // 10)
    first, last = float(np.max(r[:tenth])), float(np.max(r[-tenth:]))
    status = "pass" if last < first or (last == 0.0 and first == 0.0) else "fail"
    return CheckResult(name, status, last, first, "max over last tenth vs first tenth of |grad g|^2/S^0.25")
