"""Shared value types: parameter vectors, step schedules, seeded streams, run status.

Parameter vectors are plain ``float64`` numpy arrays. Every routine in the
package accepts a single point of shape ``(N,)`` or a batch of shape
``(R, N)``; the last axis is always the coordinate axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

DIVERGENCE_THRESHOLD = 1e8

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


class LabError(Exception):
    """Base class for errors raised by the package."""


def as_param_vector(x) -> np.ndarray:
    """Return ``x`` as a finite float64 vector with at least one coordinate."""
    arr = np.array(x, dtype=np.float64, ndmin=1)
    if arr.ndim != 1 or arr.size == 0:
        raise LabError(f"parameter vector must be 1-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise LabError("parameter vector has non-finite coordinates")
    return arr


def diverged_rows(theta: np.ndarray) -> np.ndarray:
    """Boolean mask over the leading axes: any coordinate non-finite or beyond the guard."""
    bad = ~(np.abs(theta) <= DIVERGENCE_THRESHOLD)
    return bad.any(axis=-1)


class ScheduleFamily(str, enum.Enum):
    CONSTANT = "constant"
    POWER = "power"


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``c0`` (constant) or ``c0 / (n + n0) ** gamma`` (power), for n >= 1."""

    family: ScheduleFamily = ScheduleFamily.POWER
    c0: float = 1.0
    gamma: float = 1.0
    n0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", ScheduleFamily(self.family))
        if not (math.isfinite(self.c0) and self.c0 > 0):
            raise LabError(f"schedule c0 must be positive and finite, got {self.c0}")
        if self.family is ScheduleFamily.POWER and not (math.isfinite(self.gamma) and self.gamma > 0):
            raise LabError(f"power schedule gamma must be positive, got {self.gamma}")
        if int(self.n0) != self.n0 or self.n0 < 0:
            raise LabError(f"schedule n0 must be a nonnegative integer, got {self.n0}")
        object.__setattr__(self, "n0", int(self.n0))

    @classmethod
    def constant(cls, c0: float) -> "StepSchedule":
        return cls(ScheduleFamily.CONSTANT, c0)

    @classmethod
    def power(cls, c0: float, gamma: float = 1.0, n0: int = 0) -> "StepSchedule":
        return cls(ScheduleFamily.POWER, c0, gamma, n0)

    def value(self, n):
        """Step size at index ``n`` (scalar or integer array, all >= 1)."""
        n_arr = np.asarray(n)
        if np.any(n_arr < 1):
            raise LabError("schedule index must be >= 1")
        # evaluate scalars through the 1-D path too: numpy's vectorised pow can
        # differ from its scalar pow in the last bit
        flat = n_arr.reshape(-1)
        if self.family is ScheduleFamily.CONSTANT:
            out = np.full(flat.shape, self.c0, dtype=np.float64)
        else:
            out = self.c0 / (flat.astype(np.float64) + self.n0) ** self.gamma
        return float(out[0]) if n_arr.ndim == 0 else out.reshape(n_arr.shape)

    def values(self, start: int, stop: int) -> np.ndarray:
        """Step sizes for n in ``[start, stop)``."""
        return self.value(np.arange(start, stop, dtype=np.int64))

    def to_dict(self) -> dict:
        if self.family is ScheduleFamily.CONSTANT:
            return {"family": "constant", "c0": self.c0}
        return {"family": "power", "c0": self.c0, "gamma": self.gamma, "n0": self.n0}


def schedule_value(s: StepSchedule, n: int) -> float:
    return s.value(n)


@dataclass(frozen=True)
class ScheduleReport:
    sum_diverges: bool
    sum_sq_converges: bool
    monotone: bool
    robbins_monro_ok: bool

    def to_dict(self) -> dict:
        return {
            "sum_diverges": self.sum_diverges,
            "sum_sq_converges": self.sum_sq_converges,
            "monotone": self.monotone,
            "robbins_monro_ok": self.robbins_monro_ok,
        }


def schedule_validate(s: StepSchedule) -> ScheduleReport:
    """Classify a schedule against the Robbins-Monro conditions by p-series tests."""
    if s.family is ScheduleFamily.CONSTANT:
        # monotone in the weak sense; a constant never decays to zero
        return ScheduleReport(True, False, True, False)
    sum_diverges = s.gamma <= 1.0
    sum_sq_converges = 2.0 * s.gamma > 1.0
    monotone = True
    return ScheduleReport(sum_diverges, sum_sq_converges, monotone,
                          sum_diverges and sum_sq_converges and monotone)


class RngStream:
    """Counter-based random stream keyed by ``(base_seed, substream_id)``.

    The generator is Philox-4x64 with its 128-bit key set to the pair
    ``(base_seed mod 2**64, substream_id mod 2**64)`` and the block counter
    starting at zero, so distinct substream ids never share a keystream.
    Every sample consumes whole 64-bit words:

    * uniform: ``u = ((w >> 11) + 0.5) * 2**-53``, strictly inside (0, 1);
    * standard normal: ``ndtri(u)`` (inverse normal CDF of the uniform);
    * index in ``[0, m)``: ``floor(u * m)``.

    Because the mapping is word-by-word, the sample sequence does not depend
    on how draws are chunked. ``counter`` counts words consumed so far.
    """

    def __init__(self, base_seed: int, substream_id: int):
        self.base_seed = int(base_seed)
        self.substream_id = int(substream_id)
        self.counter = 0
        key = np.array([self.base_seed & _MASK64, self.substream_id & _MASK64], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def __repr__(self):
        return f"RngStream(base_seed={self.base_seed}, substream_id={self.substream_id}, counter={self.counter})"

    def words(self, k: int) -> np.ndarray:
        self.counter += int(k)
        return self._bitgen.random_raw(int(k))

    def uniform(self, size) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        w = self.words(int(np.prod(shape)))
        return words_to_uniform(w).reshape(shape)

    def standard_normal(self, size) -> np.ndarray:
        return ndtri(self.uniform(size))

    def index(self, size, m: int) -> np.ndarray:
        return uniform_to_index(self.uniform(size), m)


def words_to_uniform(w: np.ndarray) -> np.ndarray:
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def uniform_to_index(u: np.ndarray, m: int) -> np.ndarray:
    return np.minimum(np.floor(u * m).astype(np.int64), m - 1)


def rng_substream(base_seed: int, run_index: int) -> RngStream:
    return RngStream(base_seed, run_index)


class Outcome(str, enum.Enum):
    COMPLETED = "completed"
    DIVERGED = "diverged"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class RunStatus:
    outcome: Outcome
    steps_executed: int
    divergence_step: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        if self.outcome is Outcome.DIVERGED:
            if self.divergence_step is None or self.divergence_step > self.steps_executed:
                raise LabError("diverged status needs divergence_step <= steps_executed")

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "steps_executed": self.steps_executed,
            "divergence_step": self.divergence_step,
        }
