"""Built-in synthetic simulators with analytically known behavior.

Each model gives some engine feature a desk-scale oracle:

* ``constant``      - trivial zero-variance oracle
* ``normal``        - IID Gaussian observable per step (stopping-rule oracle)
* ``ar1``           - AR(1) with known transient bias and stationary moments
                      (warm-up and steady-state oracle)
* ``extinction``    - capped branching population with a computable critical
                      survival probability (sharp-transition oracle)
* ``series_match``  - noisy biased copy of a reference series with a
                      folded-normal expected loss (calibration oracle)
"""

from __future__ import annotations

import math
import urllib.parse

from .rng import Xoshiro256StarStar
from .simulator import BuiltinSimulator, ModelSpec, ParamError


class ConstantModel(BuiltinSimulator):
    """Observable "x" equals the parameter c at every step."""

    SPEC = ModelSpec(
        name="constant",
        declared_params={"c": (-1e18, 1e18)},
        declared_observables=("x",),
        description='constant observable "x" = c',
    )

    def __init__(self, c: float = 0.0):
        super().__init__(self.SPEC, {"c": c})

    def _init_state(self, rng):
        self.observables = {"x": self.params["c"]}

    def _advance(self, rng):
        pass


class NormalModel(BuiltinSimulator):
    """Observable "x" is an independent N(mu, sigma^2) draw at every step."""

    SPEC = ModelSpec(
        name="normal",
        declared_params={"mu": (-1e18, 1e18), "sigma": (0.0, 1e18)},
        declared_observables=("x",),
        description='IID Gaussian observable "x" ~ N(mu, sigma^2) per step',
    )

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        super().__init__(self.SPEC, {"mu": mu, "sigma": sigma})

    def _init_state(self, rng):
        self._draw(rng)

    def _advance(self, rng):
        self._draw(rng)

    def _draw(self, rng):
        self.observables = {"x": rng.normal(self.params["mu"], self.params["sigma"])}


class Ar1Model(BuiltinSimulator):
    """AR(1): X_{t+1} = mu + rho (X_t - mu) + sigma eps_t, started at x0.

    Expected bias at step t is (x0 - mu) rho^t; stationary mean is mu and
    stationary variance sigma^2 / (1 - rho^2).
    """

    SPEC = ModelSpec(
        name="ar1",
        declared_params={
            "mu": (-1e18, 1e18),
            "rho": (-0.999999, 0.999999),
            "sigma": (0.0, 1e18),
            "x0": (-1e18, 1e18),
        },
        declared_observables=("x",),
        description="first-order autoregressive process with known transient",
    )

    def __init__(self, mu: float = 0.0, rho: float = 0.5, sigma: float = 1.0,
                 x0: float = 0.0):
        if not abs(rho) < 1.0:
            raise ParamError("ar1 requires |rho| < 1")
        super().__init__(self.SPEC, {"mu": mu, "rho": rho, "sigma": sigma, "x0": x0})

    def _init_state(self, rng):
        self.observables = {"x": self.params["x0"]}

    def _advance(self, rng):
        p = self.params
        x = self.observables["x"]
        self.observables["x"] = p["mu"] + p["rho"] * (x - p["mu"]) + rng.normal(0.0, p["sigma"])

    @staticmethod
    def stationary_variance(rho: float, sigma: float) -> float:
        return sigma * sigma / (1.0 - rho * rho)

    @staticmethod
    def expected_value(t: int, mu: float, rho: float, x0: float) -> float:
        return mu + (x0 - mu) * rho ** t


class ExtinctionModel(BuiltinSimulator):
    """Capped branching population with survival/scouting/birth dynamics.

    Per tick, each of the n agents survives with probability
    q = survival_p * (1 - SCOUTING_RISK * scouting_p); each survivor then
    reproduces with probability birth_rate * max(0, 1 - n/capacity) (density
    dependence uses the pre-step population).  Extinction is absorbing.

    Near n = 0 the process is a branching process with offspring mean
    q * (1 + birth_rate): subcritical (certain extinction) iff that product
    is < 1, i.e. the critical survival probability is
    1 / ((1 + birth_rate) * (1 - SCOUTING_RISK * scouting_p)).

    Observables: "abundance" = n, "vacancy" = 1 - n/capacity.
    """

    SCOUTING_RISK = 0.5

    SPEC = ModelSpec(
        name="extinction",
        declared_params={
            "survival_p": (0.0, 1.0),
            "scouting_p": (0.0, 1.0),
            "n0": (1, 100000),
            "birth_rate": (0.0, 1.0),
            "capacity": (1, 1000000),
        },
        declared_observables=("abundance", "vacancy"),
        description="branching-style population with a sharp extinction threshold",
    )

    def __init__(self, survival_p: float = 0.95, scouting_p: float = 0.0,
                 n0: int = 20, birth_rate: float = 0.1, capacity: int = 200):
        super().__init__(self.SPEC, {
            "survival_p": survival_p,
            "scouting_p": scouting_p,
            "n0": int(n0),
            "birth_rate": birth_rate,
            "capacity": int(capacity),
        })

    @classmethod
    def critical_survival_p(cls, scouting_p: float = 0.0, birth_rate: float = 0.1) -> float:
        return 1.0 / ((1.0 + birth_rate) * (1.0 - cls.SCOUTING_RISK * scouting_p))

    @classmethod
    def drift_equilibrium(cls, survival_p: float, scouting_p: float,
                          birth_rate: float, capacity: int) -> float:
        """Population where the deterministic drift vanishes (0 if subcritical)."""
        q = survival_p * (1.0 - cls.SCOUTING_RISK * scouting_p)
        if birth_rate <= 0.0 or q <= 0.0 or q * (1.0 + birth_rate) <= 1.0:
            return 0.0
        return capacity * (1.0 - (1.0 - q) / (q * birth_rate))

    def _init_state(self, rng):
        self._n = int(self.params["n0"])
        self._publish()

    def _advance(self, rng):
        p = self.params
        n = self._n
        if n > 0:
            q = p["survival_p"] * (1.0 - self.SCOUTING_RISK * p["scouting_p"])
            survivors = rng.binomial(n, q)
            b_eff = p["birth_rate"] * max(0.0, 1.0 - n / p["capacity"])
            births = rng.binomial(survivors, b_eff)
            self._n = min(survivors + births, int(p["capacity"]))
        self._publish()

    def _publish(self):
        cap = self.params["capacity"]
        self.observables = {
            "abundance": float(self._n),
            "vacancy": 1.0 - self._n / cap,
        }

    def _extra_state(self):
        return (self._n,)


DEFAULT_TARGET_SERIES = tuple(
    10.0 + 5.0 * math.sin(2.0 * math.pi * t / 25.0) for t in range(50)
)


class SeriesMatchModel(BuiltinSimulator):
    """Noisy biased copy of a reference series: sim_t = h_t (1 + bias) + sigma eps_t.

    With bias 0, the expected per-step absolute deviation from the reference
    is the folded-normal mean sigma * sqrt(2/pi), so the expected windowed L1
    loss is analytic and minimized at bias = 0.

    Observables: "sim", "target", "absdiff".  Steps beyond the series clamp
    to its last value.
    """

    SPEC = ModelSpec(
        name="series_match",
        declared_params={"bias": (-0.9, 0.9), "noise_sigma": (0.0, 1e18)},
        declared_observables=("sim", "target", "absdiff"),
        description="reference-series matcher with analytic expected loss",
    )

    def __init__(self, bias: float = 0.0, noise_sigma: float = 1.0,
                 target_series=None):
        self.series = tuple(float(v) for v in (target_series or DEFAULT_TARGET_SERIES))
        if not self.series:
            raise ParamError("series_match needs a nonempty target series")
        super().__init__(self.SPEC, {"bias": bias, "noise_sigma": noise_sigma})

    def _target_at(self, t: int) -> float:
        return self.series[min(t, len(self.series) - 1)]

    def _init_state(self, rng):
        self._publish(rng, 0)

    def _advance(self, rng):
        self._publish(rng, self.current_step + 1)

    def _publish(self, rng, t):
        p = self.params
        h = self._target_at(t)
        sim = h * (1.0 + p["bias"]) + rng.normal(0.0, p["noise_sigma"])
        self.observables = {"sim": sim, "target": h, "absdiff": abs(sim - h)}

    @staticmethod
    def expected_l1_loss(series, bias: float, noise_sigma: float,
                         window: tuple[int, int] | None = None) -> float:
        """Exact E[sum_t |sim_t - h_t|] via the folded-normal mean."""
        lo, hi = window if window is not None else (0, len(series) - 1)
        total = 0.0
        for t in range(lo, hi + 1):
            h = series[min(t, len(series) - 1)]
            mu = h * bias
            s = noise_sigma
            if s == 0.0:
                total += abs(mu)
                continue
            total += (
                s * math.sqrt(2.0 / math.pi) * math.exp(-mu * mu / (2 * s * s))
                + mu * math.erf(mu / (s * math.sqrt(2.0)))
            )
        return total


# ---------------------------------------------------------------------------
# Registry and CLI locator syntax
# ---------------------------------------------------------------------------

REGISTRY = {
    "constant": ConstantModel,
    "normal": NormalModel,
    "ar1": Ar1Model,
    "extinction": ExtinctionModel,
    "series_match": SeriesMatchModel,
}


def model_specs() -> list[ModelSpec]:
    return [cls.SPEC for cls in REGISTRY.values()]


def make_builtin(name: str, params: dict | None = None) -> BuiltinSimulator:
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise ParamError(f"unknown builtin model {name!r}") from None
    kwargs = {}
    for key, value in (params or {}).items():
        if key not in cls.SPEC.declared_params:
            raise ParamError(f"unknown parameter {key!r} for model {name!r}")
        kwargs[key] = value
    return cls(**kwargs)


def parse_builtin_locator(locator: str) -> tuple[str, dict]:
    """Parse ``builtin:<name>?<param>=<value>&...`` into (name, params)."""
    if not locator.startswith("builtin:"):
        raise ParamError(f"not a builtin locator: {locator!r}")
    rest = locator[len("builtin:"):]
    name, _, query = rest.partition("?")
    if not name:
        raise ParamError("builtin locator is missing a model name")
    params = {}
    if query:
        for key, values in urllib.parse.parse_qs(query, strict_parsing=True).items():
            try:
                params[key] = float(values[-1])
            except ValueError:
                raise ParamError(f"parameter {key!r} is not numeric: {values[-1]!r}") from None
    return name, params
