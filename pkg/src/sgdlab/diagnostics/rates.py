"""Rate predictions for momentum SGD and their empirical counterparts.

The predicted bound on E|grad g(theta_n)|^2 decays like

    exp(-s / (p (1 - alpha)^2) * sum_{i <= n} eps_i),   p = exp(M * sum_k eps_k^2),

so on a log scale it is linear in the cumulative step size. Fits here
regress ln of the ensemble-mean squared gradient norm on that same
cumulative sum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special, stats

from ..core import LabError, StepSchedule, schedule_validate

MIN_FIT_POINTS = 20


def compute_p(M: float, schedule: StepSchedule) -> float:
    """``exp(M * sum_{k>=1} eps_k^2)`` in closed form.

    For ``eps_k = c0 / (k + n0)^gamma`` the sum is ``c0^2 * zeta(2 gamma, n0 + 1)``
    (Hurwitz zeta, which already drops the first n0 terms of the p-series).
    scipy evaluates it by Euler-Maclaurin summation to double precision.
    """
    if M < 0:
        raise LabError("M must be nonnegative")
    if not schedule_validate(schedule).sum_sq_converges:
        raise LabError("sum of squared step sizes diverges; p is infinite")
    if M == 0:
        return 1.0
    tail = schedule.c0**2 * float(special.zeta(2.0 * schedule.gamma, schedule.n0 + 1))
    return math.exp(M * tail)


def rate_exponent(s: float, p: float, alpha: float) -> float:
    """The coefficient q = s / (p (1 - alpha)^2) multiplying the cumulative step size."""
    if not 0.0 <= alpha < 1.0:
        raise LabError("alpha must lie in [0,1)")
    if p < 1.0:
        raise LabError("p must be >= 1")
    return s / (p * (1.0 - alpha) ** 2)


def predicted_rate_envelope(n: int, s: float, p: float, alpha: float, schedule: StepSchedule) -> float:
    if n < 0:
        raise LabError("n must be nonnegative")
    if n == 0:
        return 1.0
    total = math.fsum(schedule.values(1, n + 1))
    return math.exp(-rate_exponent(s, p, alpha) * total)


class TimeAverageOrder(str, enum.Enum):
    POWER = "power"
    LOG_OVER_T = "log_over_T"
    ONE_OVER_T = "one_over_T"


@dataclass(frozen=True)
class TimeAverageClass:
    order: TimeAverageOrder
    q: float

    @property
    def predicted_slope(self) -> float:
        """Log-log slope of the time average against T, ignoring log factors."""
        return -self.q if self.order is TimeAverageOrder.POWER else -1.0

    def __str__(self):
        if self.order is TimeAverageOrder.POWER:
            return f"O(T^-{self.q:g})"
        return "O(ln T / T)" if self.order is TimeAverageOrder.LOG_OVER_T else "O(1/T)"


def classify_time_average_order(q: float) -> TimeAverageClass:
    """Order of (1/T) sum_n n^-q, the time average of the envelope under eps_n = 1/n."""
    if not q > 0:
        raise LabError("q must be positive")
    if q < 1.0:
        return TimeAverageClass(TimeAverageOrder.POWER, q)
    if q == 1.0:
        return TimeAverageClass(TimeAverageOrder.LOG_OVER_T, q)
    return TimeAverageClass(TimeAverageOrder.ONE_OVER_T, q)


def time_average_curve(source) -> tuple:
    """Running average (1/T) sum_{n<=T} of the mean squared gradient norm.

    ``source`` is an :class:`EnsembleSummary` (uses its per-step cumulative
    series, exact under thinning) or a 1-D per-step series for n = 1, 2, ....
    Returns ``(T, curve)``.
    """
    if isinstance(getattr(source, "mean", None), dict):
        T = source.n.astype(np.float64)
        return source.n, source.mean["cum_grad_sq"] / T
    y = np.asarray(source, dtype=np.float64)
    T = np.arange(1, y.size + 1)
    return T, np.cumsum(y) / T


def loglog_slope(T, y, burn_in: float = 0.1) -> float:
    """OLS slope of ln y against ln T over T > burn_in * max(T)."""
    T = np.asarray(T, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = T > burn_in * T.max()
    if keep.sum() < 2 or np.any(y[keep] <= 0):
        raise LabError("log-log slope needs >= 2 positive points")
    return float(stats.linregress(np.log(T[keep]), np.log(y[keep])).slope)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple
    r_squared: float
    points: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "window": list(self.window),
            "r_squared": self.r_squared,
            "points": self.points,
        }


def fit_log_linear(x, y) -> RateFit:
    """OLS of ln y on x; ``window`` reports the x range used."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < MIN_FIT_POINTS:
        raise LabError(f"rate fit needs >= {MIN_FIT_POINTS} points, got {x.size}")
    if np.any(~(y > 0)):
        raise LabError("rate fit needs strictly positive values in the window")
    ly = np.log(y)
    if np.ptp(ly) == 0.0:
        # flat input: linregress reports r = 0, the line fits exactly
        return RateFit(0.0, float(ly[0]), (float(x[0]), float(x[-1])), 1.0, int(x.size))
    res = stats.linregress(x, ly)
    return RateFit(float(res.slope), float(res.intercept), (float(x[0]), float(x[-1])),
                   float(res.rvalue**2), int(x.size))


def cumulative_steps(steps: Union[StepSchedule, np.ndarray], n: np.ndarray) -> np.ndarray:
    """x_n = sum_{i<=n} eps_i at the given indices."""
    n = np.asarray(n, dtype=np.int64)
    top = int(n.max())
    if isinstance(steps, StepSchedule):
        eps = steps.values(1, top + 1)
    else:
        eps = np.asarray(steps, dtype=np.float64)
        if eps.size < top:
            raise LabError(f"need step sizes up to n = {top}")
        eps = eps[:top]
    return np.cumsum(eps)[n - 1]


def fit_decay_exponent(summary, steps, burn_in: float = 0.1) -> RateFit:
    """Slope of ln(mean |grad g|^2) against the cumulative step size, after burn-in.

    ``steps`` is the schedule eps_n, or an explicit array eps_1, eps_2, ...
    (the mapped steps for SHB).
    """
    if not 0.0 <= burn_in < 1.0:
        raise LabError("burn_in must lie in [0,1)")
    n = summary.n
    keep = n > burn_in * n.max()
    x = cumulative_steps(steps, n[keep])
    return fit_log_linear(x, summary.mean["grad_sq"][keep])
