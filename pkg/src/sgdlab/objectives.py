"""Closed-form benchmark losses with analytic gradients and stationary-set metadata.

Each objective knows its stationary set J as a list of components. A
component is a single point, a periodic 1-D lattice of isolated points that
share one value (``sin2``/``cos2``), or a 1-D interval. Lattice entries stand
for infinitely many connected components with identical local geometry, so
one entry carries one value, one P-L constant and one nearest-point formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import LabError, RngStream

DEFAULT_WINDOW = (-10.0, 10.0)


class OutsideWindowError(LabError):
    pass


class DegenerateInputError(LabError):
    pass


@dataclass(frozen=True)
class Component:
    descriptor: str  # "point", "periodic_lattice" or "interval"
    anchor: np.ndarray
    value: float
    is_minimum: bool
    period: Optional[float] = None
    end: Optional[float] = None

    def distance(self, theta: np.ndarray) -> np.ndarray:
        if self.descriptor == "point":
            return np.sqrt(np.sum((theta - self.anchor) ** 2, axis=-1))
        x = theta[..., 0]
        a = self.anchor[0]
        if self.descriptor == "periodic_lattice":
            r = np.mod(x - a, self.period)
            return np.minimum(r, self.period - r)
        if self.descriptor == "interval":
            return np.maximum(np.maximum(a - x, x - self.end), 0.0)
        raise LabError(f"unknown component descriptor {self.descriptor!r}")

    def sample(self, k: int, rng: RngStream, window) -> np.ndarray:
        """``k`` points lying on this component and inside ``window``."""
        if self.descriptor == "point":
            return np.tile(self.anchor, (k, 1))
        a = self.anchor[0]
        if self.descriptor == "periodic_lattice":
            lo = math.ceil((window[0] - a) / self.period)
            hi = math.floor((window[1] - a) / self.period)
            j = lo + rng.index(k, hi - lo + 1)
            return (a + j * self.period)[:, None]
        u = rng.uniform(k)
        return (a + u * (self.end - a))[:, None]

    def to_dict(self) -> dict:
        out = {
            "descriptor": self.descriptor,
            "anchor": self.anchor.tolist(),
            "value": self.value,
            "is_minimum": self.is_minimum,
        }
        if self.period is not None:
            out["period"] = self.period
        if self.end is not None:
            out["end"] = self.end
        return out


@dataclass(frozen=True)
class StationarySetInfo:
    components: tuple
    window: tuple = DEFAULT_WINDOW

    def distances(self, theta: np.ndarray) -> np.ndarray:
        """Distance to each component, stacked on a new last axis."""
        return np.stack([c.distance(theta) for c in self.components], axis=-1)

    def nearest(self, theta: np.ndarray) -> np.ndarray:
        # argmin picks the first minimum, i.e. the smaller index on ties
        return np.argmin(self.distances(theta), axis=-1)


class Objective:
    """A nonnegative C^1 loss with its gradient and stationary-set metadata."""

    id: str = ""

    def __init__(self, dimension: int, metadata: StationarySetInfo, *,
                 known_lipschitz: Optional[float], known_local_pl: Optional[float],
                 infimum: float, params: Optional[dict] = None,
                 lipschitz_window_only: bool = False):
        self.dimension = int(dimension)
        self.metadata = metadata
        self.known_lipschitz = known_lipschitz
        self.known_local_pl = known_local_pl
        self.infimum = infimum
        self.params = dict(params or {})
        self.lipschitz_window_only = lipschitz_window_only

    def __repr__(self):
        return f"{type(self).__name__}({self.params})"

    def value(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def window(self):
        return self.metadata.window

    def in_window(self, theta: np.ndarray) -> np.ndarray:
        lo, hi = self.window
        return np.all((theta >= lo) & (theta <= hi), axis=-1)

    def check_window(self, theta: np.ndarray) -> None:
        if not np.all(self.in_window(theta)):
            raise OutsideWindowError(
                f"{self.id}: point outside the metadata window {self.window}")

    def distance(self, theta: np.ndarray) -> np.ndarray:
        """d(theta, J) without the window check; used inside trajectories."""
        return np.min(self.metadata.distances(theta), axis=-1)


class Quadratic(Objective):
    """``g = c/2 * |theta|^2`` in any dimension."""

    id = "quad"

    def __init__(self, c: float = 1.0, dim: int = 1):
        if not c > 0:
            raise LabError("quad: c must be positive")
        if int(dim) < 1:
            raise LabError("quad: dim must be >= 1")
        comp = Component("point", np.zeros(int(dim)), 0.0, True)
        super().__init__(dim, StationarySetInfo((comp,)), known_lipschitz=float(c),
                         known_local_pl=2.0 * c, infimum=0.0,
                         params={"c": float(c), "dim": int(dim)})
        self.c = float(c)

    def value(self, theta):
        return 0.5 * self.c * np.sum(theta * theta, axis=-1)

    def grad(self, theta):
        return self.c * theta


class SinSquared(Objective):
    """``g = sin(x)^2``; J = {k pi/2}, minima at k pi, maxima at pi/2 + k pi."""

    id = "sin2"

    def __init__(self):
        comps = (
            Component("periodic_lattice", np.zeros(1), 0.0, True, period=math.pi),
            Component("periodic_lattice", np.full(1, math.pi / 2), 1.0, False, period=math.pi),
        )
        super().__init__(1, StationarySetInfo(comps), known_lipschitz=2.0,
                         known_local_pl=4.0, infimum=0.0)

    def value(self, theta):
        return np.sin(theta[..., 0]) ** 2

    def grad(self, theta):
        return np.sin(2.0 * theta)


class CosSquared(Objective):
    """``g = cos(x)^2``; minima at pi/2 + k pi, maxima at k pi."""

    id = "cos2"

    def __init__(self):
        comps = (
            Component("periodic_lattice", np.full(1, math.pi / 2), 0.0, True, period=math.pi),
            Component("periodic_lattice", np.zeros(1), 1.0, False, period=math.pi),
        )
        super().__init__(1, StationarySetInfo(comps), known_lipschitz=2.0,
                         known_local_pl=4.0, infimum=0.0)

    def value(self, theta):
        return np.cos(theta[..., 0]) ** 2

    def grad(self, theta):
        return -np.sin(2.0 * theta)


_QUARTIC_ROOTS = (1.0, 2.0, 3.0, 4.0)


def _quartic_stationary_points():
    """Real roots of the derivative of (x-1)(x-2)(x-3)(x-4), ascending."""
    coef = np.poly(_QUARTIC_ROOTS)
    crit = np.roots(np.polyder(coef))
    crit = np.sort(crit.real[np.abs(crit.imag) < 1e-12])
    dcoef = np.polyder(coef)
    ddcoef = np.polyder(dcoef)
    # polish with Newton so the analytic gradient vanishes to rounding
    for _ in range(3):
        crit = crit - np.polyval(dcoef, crit) / np.polyval(ddcoef, crit)
    return coef, crit


class Quartic(Objective):
    """``g = (x-1)(x-2)(x-3)(x-4) + k0`` with ``k0`` lifting the minimum to zero.

    The gradient is not globally Lipschitz, so the stored constant is the
    supremum of ``|g''|`` on the metadata window only.
    """

    id = "quartic"

    def __init__(self):
        coef, crit = _quartic_stationary_points()
        raw = np.polyval(coef, crit)
        self.shift = float(-np.min(raw))
        self._dcoef = np.polyder(coef)
        ddcoef = np.polyder(self._dcoef)
        curv = np.polyval(ddcoef, crit)
        comps = tuple(
            Component("point", np.array([x]), float(v + self.shift), bool(k > 0))
            for x, v, k in zip(crit, raw, curv)
        )
        lo, hi = DEFAULT_WINDOW
        # g'' is an upward parabola: its sup on the window sits at an endpoint
        c_window = float(max(abs(np.polyval(ddcoef, lo)), abs(np.polyval(ddcoef, hi))))
        s_min = float(np.min(2.0 * np.abs(curv)))
        super().__init__(1, StationarySetInfo(comps), known_lipschitz=c_window,
                         known_local_pl=s_min, infimum=0.0, lipschitz_window_only=True)

    def value(self, theta):
        x = theta[..., 0]
        return (x - 1.0) * (x - 2.0) * (x - 3.0) * (x - 4.0) + self.shift

    def grad(self, theta):
        return np.polyval(self._dcoef, theta)


class FiniteSumQuadratic(Objective):
    """``g = (1/m) sum_i |theta - a_i|^2 / 2`` with component gradients ``theta - a_i``."""

    id = "finite_sum_quad"

    def __init__(self, centers: Sequence = ((-1.0,), (1.0,))):
        a = np.array(centers, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1:
            raise LabError("finite_sum_quad: centers must be an (m, N) array with m >= 1")
        self.centers = a
        self.mean_center = a.mean(axis=0)
        g_star = 0.5 * float(np.mean(np.sum((a - self.mean_center) ** 2, axis=-1)))
        comp = Component("point", self.mean_center.copy(), g_star, True)
        super().__init__(a.shape[1], StationarySetInfo((comp,)), known_lipschitz=1.0,
                         known_local_pl=2.0, infimum=g_star,
                         params={"centers": a.tolist()})

    @property
    def n_components(self) -> int:
        return self.centers.shape[0]

    def value(self, theta):
        diff = theta[..., None, :] - self.centers
        return 0.5 * np.mean(np.sum(diff * diff, axis=-1), axis=-1)

    def grad(self, theta):
        return theta - self.mean_center

    def component_grad(self, theta, idx):
        return theta - self.centers[idx]


_FACTORIES: dict = {
    "quad": Quadratic,
    "sin2": SinSquared,
    "cos2": CosSquared,
    "quartic": Quartic,
    "finite_sum_quad": FiniteSumQuadratic,
}

OBJECTIVE_IDS = tuple(_FACTORIES)


def make_objective(objective_id: str, **params) -> Objective:
    try:
        factory = _FACTORIES[objective_id]
    except KeyError:
        raise LabError(f"unknown objective {objective_id!r}; expected one of {OBJECTIVE_IDS}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise LabError(f"invalid parameters for objective {objective_id!r}: {exc}") from None


def catalog() -> list:
    return [Quadratic(1.0), SinSquared(), CosSquared(), Quartic(), FiniteSumQuadratic()]


def distance_to_stationary_set(obj: Objective, theta) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    obj.check_window(theta)
    d = obj.distance(theta)
    return float(d) if np.ndim(d) == 0 else d


def gradient_check(obj: Objective, points, h: float = 1e-5,
                   grad: Optional[Callable] = None) -> float:
    """Max of |central difference - analytic| / (1 + |analytic|) over points and coordinates.

    ``grad`` overrides the objective's own gradient, to check a candidate field.
    """
    if not 1e-8 <= h <= 1e-3:
        raise LabError("gradient_check: h must lie in [1e-8, 1e-3]")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    analytic = (grad or obj.grad)(pts)
    worst = 0.0
    for j in range(pts.shape[1]):
        step = np.zeros(pts.shape[1])
        step[j] = h
        fd = (obj.value(pts + step) - obj.value(pts - step)) / (2.0 * h)
        err = np.abs(fd - analytic[:, j]) / (1.0 + np.abs(analytic[:, j]))
        worst = max(worst, float(np.max(err)))
    return worst


def local_pl_ratio(obj: Objective, theta, absolute: bool = False):
    """``|grad g|^2 / (g - g_i)`` for the nearest component i.

    With ``absolute`` the denominator is ``|g - g_i|``, which keeps the ratio
    positive around maxima.
    """
    theta = np.asarray(theta, dtype=np.float64)
    obj.check_window(theta)
    idx = obj.metadata.nearest(theta)
    values = np.array([c.value for c in obj.metadata.components])[idx]
    denom = obj.value(theta) - values
    if np.any(denom == 0.0):
        raise DegenerateInputError(f"{obj.id}: point lies on a stationary component")
    gsq = np.sum(obj.grad(theta) ** 2, axis=-1)
    out = gsq / (np.abs(denom) if absolute else denom)
    return float(out) if np.ndim(out) == 0 else out
