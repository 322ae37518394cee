"""Update rules as pure state transitions.

States hold numpy arrays shaped ``(N,)`` or ``(R, N)``; every step works on
either, so an ensemble advances in one call. Steps never raise on overflow:
callers test the returned ``theta`` with :func:`sgdlab.core.diverged_rows`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import LabError, StepSchedule


class Algorithm(str, enum.Enum):
    SGD = "sgd"
    MSGD = "msgd"
    SHB = "shb"
    ADAGRAD_NORM = "adagrad_norm"
    ADAGRAD_COORD = "adagrad_coord"

    @property
    def is_adagrad(self) -> bool:
        return self in (Algorithm.ADAGRAD_NORM, Algorithm.ADAGRAD_COORD)


@dataclass(frozen=True)
class SgdState:
    theta: np.ndarray
    n: int = 1


@dataclass(frozen=True)
class MsgdState:
    theta: np.ndarray
    v: np.ndarray
    n: int = 1


@dataclass(frozen=True)
class ShbState:
    theta: np.ndarray
    v: np.ndarray
    n: int = 1


@dataclass(frozen=True)
class AdagradNormState:
    theta: np.ndarray
    S: np.ndarray  # shape theta.shape[:-1]
    n: int = 1


@dataclass(frozen=True)
class AdagradCoordState:
    theta: np.ndarray
    Q: np.ndarray
    n: int = 1


def sgd_step(state: SgdState, grad: np.ndarray, eps: float) -> SgdState:
    return SgdState(state.theta - eps * grad, state.n + 1)


def msgd_step(state: MsgdState, grad: np.ndarray, alpha: float, eps: float) -> MsgdState:
    v = alpha * state.v + eps * grad
    return MsgdState(state.theta - v, v, state.n + 1)


def shb_step(state: ShbState, grad: np.ndarray, beta: float, gamma: float) -> ShbState:
    v = beta * state.v + (1.0 - beta) * grad
    return ShbState(state.theta - gamma * v, v, state.n + 1)


def map_shb_to_msgd(gamma_n: float, gamma_prev: float, beta_n: float) -> tuple:
    """Momentum and step size of the mSGD recursion equivalent to one SHB step.

    Scaling the SHB buffer by ``gamma_n`` turns it into an mSGD buffer with
    ``alpha_n = beta_n * gamma_n / gamma_prev`` and ``eps_n = gamma_n * (1 - beta_n)``.
    """
    if not gamma_prev > 0:
        raise LabError("gamma_prev must be positive")
    return (gamma_n / gamma_prev) * beta_n, gamma_n * (1.0 - beta_n)


def _adagrad_update(theta, grad, acc, alpha0):
    # the zero-accumulator case only arises from an all-zero first sample; skip it
    pos = acc > 0
    step = np.divide(alpha0 * grad, np.sqrt(acc), out=np.zeros_like(grad), where=pos)
    return theta - step


def adagrad_norm_step(state: AdagradNormState, grad: np.ndarray, alpha0: float) -> AdagradNormState:
    S = state.S + np.sum(grad * grad, axis=-1)
    theta = _adagrad_update(state.theta, grad, np.broadcast_to(S[..., None], grad.shape), alpha0)
    return AdagradNormState(theta, S, state.n + 1)


def adagrad_coord_step(state: AdagradCoordState, grad: np.ndarray, alpha0: float) -> AdagradCoordState:
    Q = state.Q + grad * grad
    return AdagradCoordState(_adagrad_update(state.theta, grad, Q, alpha0), Q, state.n + 1)


def _as_schedule(x) -> Optional[StepSchedule]:
    if x is None or isinstance(x, StepSchedule):
        return x
    return StepSchedule.constant(float(x))


@dataclass(frozen=True)
class HyperParams:
    """Per-algorithm hyperparameters.

    ``schedule`` is the step-size sequence of sgd/msgd, ``alpha`` the mSGD
    momentum, ``beta``/``gamma`` the SHB momentum and step schedules, and
    ``alpha0`` the AdaGrad scale.
    """

    schedule: Optional[StepSchedule] = None
    alpha: Optional[float] = None
    beta: Optional[StepSchedule] = None
    gamma: Optional[StepSchedule] = None
    alpha0: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_schedule(self.beta))
        object.__setattr__(self, "gamma", _as_schedule(self.gamma))
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise LabError("alpha must lie in [0,1)")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise LabError("alpha0 must be positive")
        if self.beta is not None:
            # the largest value of either family is at n = 1
            b1 = self.beta.value(1)
            if not b1 < 1.0:
                raise LabError("beta must lie in (0,1)")

    def validate_for(self, algorithm: Algorithm) -> None:
        """Raise unless exactly the fields the algorithm uses are present."""
        algorithm = Algorithm(algorithm)
        need = {
            Algorithm.SGD: {"schedule"},
            Algorithm.MSGD: {"schedule", "alpha"},
            Algorithm.SHB: {"beta", "gamma"},
            Algorithm.ADAGRAD_NORM: {"alpha0"},
            Algorithm.ADAGRAD_COORD: {"alpha0"},
        }[algorithm]
        for name in ("schedule", "alpha", "beta", "gamma", "alpha0"):
            present = getattr(self, name) is not None
            if name in need and not present:
                raise LabError(f"{name}: required for {algorithm.value}")
            if name not in need and present:
                raise LabError(f"{name}: not used by {algorithm.value}")

    def step_sizes(self, algorithm: Algorithm, start: int, stop: int) -> np.ndarray:
        """Effective mSGD step sizes eps_n for n in [start, stop) (mapped for SHB)."""
        algorithm = Algorithm(algorithm)
        if algorithm in (Algorithm.SGD, Algorithm.MSGD):
            return self.schedule.values(start, stop)
        if algorithm is Algorithm.SHB:
            return self.gamma.values(start, stop) * (1.0 - self.beta.values(start, stop))
        raise LabError("AdaGrad has no deterministic step-size schedule")

    def with_(self, **kw) -> "HyperParams":
        return replace(self, **kw)


def init_state(algorithm: Algorithm, theta1: np.ndarray, v0: Optional[np.ndarray] = None):
    algorithm = Algorithm(algorithm)
    theta1 = np.array(theta1, dtype=np.float64)
    if algorithm is Algorithm.SGD:
        return SgdState(theta1)
    if algorithm in (Algorithm.MSGD, Algorithm.SHB):
        v = np.zeros_like(theta1) if v0 is None else np.broadcast_to(v0, theta1.shape).astype(np.float64)
        cls = MsgdState if algorithm is Algorithm.MSGD else ShbState
        return cls(theta1, v)
    if algorithm is Algorithm.ADAGRAD_NORM:
        return AdagradNormState(theta1, np.zeros(theta1.shape[:-1]))
    return AdagradCoordState(theta1, np.zeros_like(theta1))


def step(algorithm: Algorithm, state, grad: np.ndarray, hp: HyperParams):
    """Advance ``state`` by one step of ``algorithm`` using sampled gradient ``grad``."""
    n = state.n
    if algorithm is Algorithm.SGD:
        return sgd_step(state, grad, hp.schedule.value(n))
    if algorithm is Algorithm.MSGD:
        return msgd_step(state, grad, hp.alpha, hp.schedule.value(n))
    if algorithm is Algorithm.SHB:
        return shb_step(state, grad, hp.beta.value(n), hp.gamma.value(n))
    if algorithm is Algorithm.ADAGRAD_NORM:
        return adagrad_norm_step(state, grad, hp.alpha0)
    return adagrad_coord_step(state, grad, hp.alpha0)
