"""smcheck: statistical model checking and calibration for stochastic simulators."""

from .rng import SeedPlan, derive_seed
from .simulator import BuiltinSimulator, ExternalSimulator, ModelSpec, Simulator
from .stats import CiSpec, SampleAccumulator, WelchResult, ci_halfwidth, t_quantile, welch_test

__version__ = "0.1.0"

__all__ = [
    "SeedPlan",
    "derive_seed",
    "Simulator",
    "BuiltinSimulator",
    "ExternalSimulator",
    "ModelSpec",
    "CiSpec",
    "SampleAccumulator",
    "WelchResult",
    "ci_halfwidth",
    "t_quantile",
    "welch_test",
    "__version__",
]
