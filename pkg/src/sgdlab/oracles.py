"""Stochastic gradient samplers.

Three noise models:

* ``exact``: the true gradient, no randomness consumed.
* ``additive_gaussian``: ``grad g(theta) + xi`` with ``xi ~ N(0, sigma^2 I)``;
  one stream word per coordinate.
* ``finite_sum_uniform``: ``grad g_i(theta)`` for a component ``i`` drawn
  uniformly; one stream word per sample. This is how the package reads
  "uniform sampling" noise: uniform choice over the summands of a finite sum.

A sample at step n uses only ``theta_n`` and that step's words, so runs are
reproducible from ``(base_seed, run_index)`` alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .core import LabError, RngStream, uniform_to_index, words_to_uniform
from .objectives import FiniteSumQuadratic, Objective


class OracleKind(str, enum.Enum):
    EXACT = "exact"
    ADDITIVE_GAUSSIAN = "additive_gaussian"
    FINITE_SUM_UNIFORM = "finite_sum_uniform"


class GradientOracle:
    def __init__(self, kind, objective: Objective, sigma: Optional[float] = None):
        self.kind = OracleKind(kind)
        self.objective = objective
        if self.kind is OracleKind.ADDITIVE_GAUSSIAN:
            if sigma is None or not sigma > 0:
                raise LabError("additive_gaussian oracle needs sigma > 0")
            self.sigma = float(sigma)
        else:
            if sigma is not None:
                raise LabError(f"{self.kind.value} oracle takes no sigma")
            self.sigma = None
        if self.kind is OracleKind.FINITE_SUM_UNIFORM and not hasattr(objective, "component_grad"):
            raise LabError(f"finite_sum_uniform oracle needs a finite-sum objective, got {objective.id!r}")

    def __repr__(self):
        extra = f", sigma={self.sigma}" if self.sigma is not None else ""
        return f"GradientOracle({self.kind.value}, {self.objective.id}{extra})"

    @property
    def objective_id(self) -> str:
        return self.objective.id

    @property
    def words_per_sample(self) -> int:
        if self.kind is OracleKind.EXACT:
            return 0
        if self.kind is OracleKind.ADDITIVE_GAUSSIAN:
            return self.objective.dimension
        return 1

    def noise_from_words(self, words: np.ndarray):
        """Turn raw words of shape (..., words_per_sample) into per-step noise.

        Gaussian: array (..., N) of N(0, sigma^2) draws. Finite sum: integer
        component indices of shape (...). Exact: ``None``.
        """
        if self.kind is OracleKind.EXACT:
            return None
        u = words_to_uniform(words)
        if self.kind is OracleKind.ADDITIVE_GAUSSIAN:
            return self.sigma * ndtri(u)
        return uniform_to_index(u[..., 0], self.objective.n_components)

    def apply(self, theta: np.ndarray, true_grad: np.ndarray, noise) -> np.ndarray:
        """Sampled gradient given the true gradient at ``theta`` and drawn noise."""
        if self.kind is OracleKind.EXACT:
            return true_grad
        if self.kind is OracleKind.ADDITIVE_GAUSSIAN:
            return true_grad + noise
        return self.objective.component_grad(theta, noise)

    def draw_noise(self, rng: RngStream, k: int):
        words = rng.words(k * self.words_per_sample).reshape(k, self.words_per_sample)
        return self.noise_from_words(words)

    def sample_many(self, theta, rng: RngStream, k: int) -> np.ndarray:
        """``k`` independent samples at a fixed point, shape (k, N)."""
        theta = np.asarray(theta, dtype=np.float64)
        g = self.objective.grad(theta)
        if self.kind is OracleKind.EXACT:
            return np.tile(g, (k, 1))
        noise = self.draw_noise(rng, k)
        return self.apply(np.broadcast_to(theta, (k, theta.size)), np.broadcast_to(g, (k, g.size)), noise)

    @property
    def enumerable(self) -> bool:
        return self.kind is not OracleKind.ADDITIVE_GAUSSIAN

    def outcomes(self, theta) -> np.ndarray:
        """All equally likely samples at ``theta`` for finitely supported oracles, shape (m, N)."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.kind is OracleKind.EXACT:
            return self.objective.grad(theta)[None, :]
        if self.kind is OracleKind.FINITE_SUM_UNIFORM:
            idx = np.arange(self.objective.n_components)
            return self.objective.component_grad(theta[None, :], idx)
        raise LabError("gaussian oracle has no finite outcome set")

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        return out


def sample_gradient(o: GradientOracle, theta, rng: RngStream) -> np.ndarray:
    return o.sample_many(theta, rng, 1)[0]


@dataclass(frozen=True)
class NoiseConstants:
    M: float
    M_prime: float
    a: float
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {"M": self.M, "M_prime": self.M_prime, "a": self.a, "flags": list(self.flags)}


def theoretical_noise_constants(o: GradientOracle) -> NoiseConstants:
    """Constants of the noise bounds ``E|noise|^2 <= M(1+g)`` and ``E|sample|^2 <= M'|grad|^2 + a``."""
    if o.kind is OracleKind.EXACT:
        return NoiseConstants(0.0, 1.0, 0.0, ("M=0: zero noise satisfies the bound for any M>0",))
    n = o.objective.dimension
    if o.kind is OracleKind.ADDITIVE_GAUSSIAN:
        v = n * o.sigma**2
        return NoiseConstants(v, 1.0, v)
    obj = o.objective
    if not isinstance(obj, FiniteSumQuadratic):
        raise LabError("closed-form constants need a finite-sum quadratic objective")
    # noise is (mean_center - a_i), independent of theta: E|noise|^2 is a constant
    noise_var = float(np.mean(np.sum((obj.centers - obj.mean_center) ** 2, axis=-1)))
    # M = sup over the window of noise_var / (1 + g); g is smallest at the minimiser
    M = noise_var / (1.0 + obj.infimum)
    flags = ("empirical: finite-sum constants from the stored centers, valid on the window",)
    # E|sample|^2 = |grad|^2 + noise_var exactly
    return NoiseConstants(M, 1.0, noise_var, flags)
