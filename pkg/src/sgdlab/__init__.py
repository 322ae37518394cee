"""Momentum SGD, stochastic heavy ball and AdaGrad on nonconvex test objectives."""

from .core import LabError, Outcome, RngStream, RunStatus, StepSchedule, rng_substream, schedule_validate
from .objectives import catalog, make_objective
from .optimizers import Algorithm, HyperParams
from .oracles import GradientOracle, OracleKind

__version__ = "0.1.0"
