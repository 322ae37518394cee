"""Trajectory simulation and ensemble aggregation.

Runs of an ensemble advance together as rows of one ``(R, N)`` array; each
row draws its noise from its own :class:`~sgdlab.core.RngStream`, so a row's
trajectory is bit-identical to the same run simulated alone.

Recorded rows are indexed by the iterate counter n (``theta_1`` is the
starting point, ``theta_{N+1}`` the point after the last of N steps). At row n:

``g``, ``grad_sq``, ``dist``
    g(theta_n), |grad g(theta_n)|^2 (true gradient), d(theta_n, J)
``v_sq``
    squared norm of the latest displacement ``theta_{n-1} - theta_n`` written
    as the method's momentum: v_{n-1} for mSGD (v_0 at n = 1),
    gamma_{n-1} v_{n-1} for SHB, eps_{n-1} * sample for SGD
``cum_v_sq``
    running sum of ``v_sq`` from v_0 through v_{n-1}
``cum_eps_grad``
    sum over t < n of eps_t |grad g(theta_t)|^2
``S``
    AdaGrad accumulator S_{n-1} (sum of squared sample norms so far)
``lemma8_sum``
    sum over 3 <= k <= n of |grad g(theta_k)|^2 / S_{k-1}^(1/2 + 0.1)
``cum_grad_sq``
    sum over t <= n of |grad g(theta_t)|^2, so time averages survive thinning
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import LabError, Outcome, RngStream, RunStatus, diverged_rows, rng_substream
from ..objectives import Objective
from ..optimizers import (
    AdagradNormState,
    Algorithm,
    HyperParams,
    adagrad_coord_step,
    adagrad_norm_step,
    init_state,
    msgd_step,
    sgd_step,
    shb_step,
)
from ..oracles import GradientOracle

LEMMA8_EPS = 0.1
BLOCK_STEPS = 1024

MOMENTUM_SERIES = ("g", "grad_sq", "dist", "v_sq", "cum_v_sq", "cum_eps_grad", "cum_grad_sq")
ADAGRAD_SERIES = ("g", "grad_sq", "dist", "S", "lemma8_sum", "cum_grad_sq")


class AllDivergedError(LabError):
    def __init__(self, ensemble):
        super().__init__(f"all {ensemble.runs} runs diverged")
        self.ensemble = ensemble


@dataclass(frozen=True)
class RunSpec:
    objective: Objective
    oracle: GradientOracle
    algorithm: Algorithm
    hyper: HyperParams
    horizon: int
    theta1: np.ndarray
    v0: Optional[np.ndarray] = None
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.horizon < 1:
            raise LabError("horizon must be >= 1")
        if self.stride < 1:
            raise LabError("stride must be >= 1")
        self.hyper.validate_for(self.algorithm)
        theta1 = np.array(self.theta1, dtype=np.float64, ndmin=1)
        if theta1.shape != (self.objective.dimension,):
            raise LabError(f"theta1 must have {self.objective.dimension} coordinates")
        object.__setattr__(self, "theta1", theta1)
        if self.v0 is not None:
            if self.algorithm not in (Algorithm.MSGD, Algorithm.SHB):
                raise LabError("v0 applies to momentum methods only")
            v0 = np.array(self.v0, dtype=np.float64, ndmin=1)
            if v0.shape != theta1.shape:
                raise LabError("v0 must match theta1 in shape")
            object.__setattr__(self, "v0", v0)

    @property
    def series_names(self) -> tuple:
        return ADAGRAD_SERIES if self.algorithm.is_adagrad else MOMENTUM_SERIES


def record_rows(horizon: int, stride: int) -> np.ndarray:
    rows = np.arange(1, horizon + 2, stride, dtype=np.int64)
    if rows[-1] != horizon + 1:
        rows = np.append(rows, horizon + 1)
    return rows


@dataclass
class TrajectoryRecord:
    n: np.ndarray
    series: dict
    status: RunStatus
    base_seed: int
    run_index: int

    def __getitem__(self, name):
        return self.series[name]

    def __len__(self):
        return len(self.n)


@dataclass
class Ensemble:
    """Raw per-run series of shape (R, K); NaN after a run diverges."""

    spec: RunSpec
    n: np.ndarray
    data: dict
    statuses: list
    base_seed: int
    run_indices: list

    @property
    def runs(self) -> int:
        return len(self.statuses)

    @property
    def diverged(self) -> np.ndarray:
        return np.array([s.outcome is Outcome.DIVERGED for s in self.statuses])

    @property
    def records(self) -> list:
        out = []
        for r, status in enumerate(self.statuses):
            if status.outcome is Outcome.DIVERGED:
                k = int(np.searchsorted(self.n, status.divergence_step, side="right"))
            else:
                k = len(self.n)
            out.append(TrajectoryRecord(self.n[:k], {name: arr[r, :k] for name, arr in self.data.items()},
                                        status, self.base_seed, self.run_indices[r]))
        return out

    def summary(self) -> "EnsembleSummary":
        return summarize(self)


@dataclass
class EnsembleSummary:
    n: np.ndarray
    mean: dict
    q10: dict
    q50: dict
    q90: dict
    runs: int
    diverged_count: int
    ensemble: Ensemble = field(repr=False)

    @property
    def records(self) -> list:
        return self.ensemble.records

    @property
    def completed_runs(self) -> int:
        return self.runs - self.diverged_count


def summarize(ensemble: Ensemble) -> EnsembleSummary:
    """Cross-run mean and 10/50/90 quantiles over non-diverged runs."""
    ok = ~ensemble.diverged
    if not ok.any():
        raise AllDivergedError(ensemble)
    mean, q10, q50, q90 = {}, {}, {}, {}
    for name, arr in ensemble.data.items():
        sub = arr[ok]
        mean[name] = sub.mean(axis=0)
        q10[name], q50[name], q90[name] = np.quantile(sub, [0.1, 0.5, 0.9], axis=0)
    return EnsembleSummary(ensemble.n, mean, q10, q50, q90, ensemble.runs,
                           int((~ok).sum()), ensemble)


def simulate(spec: RunSpec, streams: list, base_seed: int = 0, run_indices=None) -> Ensemble:
    """Advance one run per stream for ``spec.horizon`` steps."""
    obj, oracle, algo, hp = spec.objective, spec.oracle, spec.algorithm, spec.hyper
    R, N, dim = len(streams), spec.horizon, obj.dimension
    rows = record_rows(N, spec.stride)
    names = spec.series_names
    data = {name: np.full((R, len(rows)), np.nan) for name in names}

    theta = np.tile(spec.theta1, (R, 1))
    state = init_state(algo, theta, spec.v0)
    adagrad = algo.is_adagrad
    if not adagrad:
        eps = hp.step_sizes(algo, 1, N + 1)
    if algo is Algorithm.MSGD:
        alpha = hp.alpha
    elif algo is Algorithm.SHB:
        betas = hp.beta.values(1, N + 1)
        gammas = hp.gamma.values(1, N + 1)
    v_sq = np.sum(state.v ** 2, axis=-1) if algo in (Algorithm.MSGD, Algorithm.SHB) else np.zeros(R)
    if algo is Algorithm.SHB and spec.v0 is not None:
        # scaled by gamma_1, the first step's factor; cf. the SHB -> mSGD mapping
        v_sq = v_sq * gammas[0] ** 2
    cum_v = v_sq.copy()
    cum_eps = np.zeros(R)
    l8 = np.zeros(R)
    cum_gsq = np.zeros(R)
    alive = np.ones(R, dtype=bool)
    div_step = np.zeros(R, dtype=np.int64)
    wps = oracle.words_per_sample

    def record(k, theta, gsq):
        vals = {"g": obj.value(theta), "grad_sq": gsq, "dist": obj.distance(theta),
                "cum_grad_sq": cum_gsq}
        if adagrad:
            vals["S"] = state.S if algo is Algorithm.ADAGRAD_NORM else np.sum(state.Q, axis=-1)
            vals["lemma8_sum"] = l8
        else:
            vals.update(v_sq=v_sq, cum_v_sq=cum_v, cum_eps_grad=cum_eps)
        for name in names:
            data[name][:, k] = np.where(alive, vals[name], np.nan)

    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for b0 in range(1, N + 1, BLOCK_STEPS):
            b1 = min(b0 + BLOCK_STEPS, N + 1)
            if wps:
                words = np.stack([s.words((b1 - b0) * wps) for s in streams]).reshape(R, b1 - b0, wps)
                noise = oracle.noise_from_words(words)
            for n in range(b0, b1):
                theta = state.theta
                tg = obj.grad(theta)
                gsq = np.sum(tg * tg, axis=-1)
                cum_gsq = cum_gsq + gsq
                if adagrad and n >= 3:
                    s_prev = state.S if algo is Algorithm.ADAGRAD_NORM else np.sum(state.Q, axis=-1)
                    l8 = l8 + np.divide(gsq, s_prev ** (0.5 + LEMMA8_EPS),
                                        out=np.zeros(R), where=s_prev > 0)
                if rows[k] == n:
                    record(k, theta, gsq)
                    k += 1
                sample = oracle.apply(theta, tg, noise[:, n - b0] if wps else None)
                i = n - 1
                if algo is Algorithm.SGD:
                    state = sgd_step(state, sample, eps[i])
                    v_sq = eps[i] * eps[i] * np.sum(sample * sample, axis=-1)
                elif algo is Algorithm.MSGD:
                    state = msgd_step(state, sample, alpha, eps[i])
                    v_sq = np.sum(state.v * state.v, axis=-1)
                elif algo is Algorithm.SHB:
                    state = shb_step(state, sample, betas[i], gammas[i])
                    gv = gammas[i] * state.v
                    v_sq = np.sum(gv * gv, axis=-1)
                elif algo is Algorithm.ADAGRAD_NORM:
                    state = adagrad_norm_step(state, sample, hp.alpha0)
                else:
                    state = adagrad_coord_step(state, sample, hp.alpha0)
                if not adagrad:
                    cum_eps = cum_eps + eps[i] * gsq
                    cum_v = cum_v + v_sq
                m = np.max(np.abs(state.theta))
                if not m <= 1e8:
                    state = _retire(state, diverged_rows(state.theta) & alive, alive, div_step, n)
        if k < len(rows):
            theta = state.theta
            tg = obj.grad(theta)
            gsq = np.sum(tg * tg, axis=-1)
            cum_gsq = cum_gsq + gsq
            if adagrad and N + 1 >= 3:
                s_prev = state.S if algo is Algorithm.ADAGRAD_NORM else np.sum(state.Q, axis=-1)
                l8 = l8 + np.divide(gsq, s_prev ** (0.5 + LEMMA8_EPS), out=np.zeros(R), where=s_prev > 0)
            record(k, theta, gsq)

    statuses = []
    for r in range(R):
        if alive[r]:
            outcome = Outcome.COMPLETED
            if adagrad and data["S"][r, -1] == 0.0:
                outcome = Outcome.DEGENERATE
            statuses.append(RunStatus(outcome, N))
        else:
            statuses.append(RunStatus(Outcome.DIVERGED, int(div_step[r]), int(div_step[r])))
    if run_indices is None:
        run_indices = list(range(R))
    return Ensemble(spec, rows, data, statuses, base_seed, list(run_indices))


def _retire(state, bad, alive, div_step, n):
    """Mark newly diverged rows and park them at the origin so they stay finite."""
    div_step[bad] = n
    alive[bad] = False
    dead = ~alive
    fields = {"theta": np.where(dead[:, None], 0.0, state.theta)}
    for name in ("v", "Q"):
        if hasattr(state, name):
            fields[name] = np.where(dead[:, None], 0.0, getattr(state, name))
    if isinstance(state, AdagradNormState):
        fields["S"] = np.where(dead, 0.0, state.S)
    return type(state)(n=state.n, **fields)


def run_trajectory(spec: RunSpec, rng: RngStream) -> TrajectoryRecord:
    """Simulate one run; divergence yields a partial record, not an exception."""
    return simulate(spec, [rng], rng.base_seed, [rng.substream_id]).records[0]


def simulate_ensemble(spec: RunSpec, runs: int, base_seed: int) -> Ensemble:
    if runs < 2:
        raise LabError("an ensemble needs at least 2 runs")
    streams = [rng_substream(base_seed, i) for i in range(runs)]
    return simulate(spec, streams, base_seed, list(range(runs)))


def run_ensemble(spec: RunSpec, runs: int, base_seed: int) -> EnsembleSummary:
    return simulate_ensemble(spec, runs, base_seed).summary()
