"""Numerical statistics core: streaming moments, Student-t, Welch's test.

Self-contained on purpose - the t distribution is computed from the
regularized incomplete beta function (continued fraction + quantile
inversion) rather than pulled from an external numerics package, so the
engine has no runtime dependencies and behaves identically everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class StatsError(ValueError):
    """Domain error in a statistical computation."""


@dataclass
class SampleAccumulator:
    """Welford-style streaming mean and sum of squared deviations.

    A value type: copy freely, merge across workers.  Merging two
    accumulators is equivalent to accumulating the concatenated streams.
    """

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "SampleAccumulator") -> None:
        """Chan et al. parallel combination of two accumulators."""
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n

    @property
    def variance(self) -> float:
        """Unbiased sample variance s^2 = m2 / (n - 1)."""
        if self.n < 2:
            raise StatsError("variance requires at least 2 samples")
        return max(self.m2, 0.0) / (self.n - 1)

    def copy(self) -> "SampleAccumulator":
        return SampleAccumulator(self.n, self.mean, self.m2)

    @classmethod
    def from_samples(cls, xs) -> "SampleAccumulator":
        acc = cls()
        for x in xs:
            acc.add(float(x))
        return acc


@dataclass(frozen=True)
class CiSpec:
    """Confidence-interval requirement: significance level and max width.

    ``delta`` bounds the FULL interval width (the engine checks
    2 * halfwidth <= delta).
    """

    alpha: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise StatsError("alpha must be in (0, 1)")
        if not self.delta > 0.0:
            raise StatsError("delta must be positive")


@dataclass(frozen=True)
class WelchResult:
    t_stat: float
    dof: float
    p_two_sided: float


# ---------------------------------------------------------------------------
# Incomplete beta / Student-t machinery
# ---------------------------------------------------------------------------

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-15
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise StatsError("betainc_reg requires a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, dof: float) -> float:
    """CDF of Student-t with ``dof`` degrees of freedom."""
    if dof <= 0.0:
        raise StatsError("dof must be positive")
    if t == 0.0:
        return 0.5
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    x = dof / (dof + t * t)
    tail = 0.5 * betainc_reg(dof / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def t_pdf(t: float, dof: float) -> float:
    ln = (
        math.lgamma((dof + 1.0) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * math.log(dof * math.pi)
        - (dof + 1.0) / 2.0 * math.log1p(t * t / dof)
    )
    return math.exp(ln)


def norm_quantile(p: float) -> float:
    """Standard normal quantile: Acklam's approximation + one Halley step."""
    if not 0.0 < p < 1.0:
        raise StatsError("p must be in (0, 1)")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # Halley refinement against the exact CDF (math.erfc).
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    x = x - u / (1.0 + x * u / 2.0)
    return x


def t_quantile(dof: float, p: float) -> float:
    """p-quantile of Student-t, by bracketed Newton on the CDF (tol 1e-10)."""
    if dof <= 0.0:
        raise StatsError("dof must be positive")
    if not 0.0 < p < 1.0:
        raise StatsError("p must be in (0, 1)")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(dof, 1.0 - p)

    # Initial bracket [lo, hi] around the positive root.
    z = norm_quantile(p)
    hi = max(1.0, z * 2.0 + 1.0)
    while t_cdf(hi, dof) < p:
        hi *= 2.0
        if hi > 1e300:
            raise StatsError("t_quantile failed to bracket")
    lo = 0.0
    x = min(max(z, lo + 1e-6), hi)
    for _ in range(200):
        f = t_cdf(x, dof) - p
        if f > 0.0:
            hi = x
        else:
            lo = x
        df = t_pdf(x, dof)
        step_ok = df > 0.0
        if step_ok:
            x_new = x - f / df
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-12 * max(1.0, abs(x_new)) + 1e-14:
            x = x_new
            break
        x = x_new
    return x


# ---------------------------------------------------------------------------
# Confidence intervals and Welch's test
# ---------------------------------------------------------------------------

def ci_halfwidth(acc: SampleAccumulator, alpha: float) -> float:
    """Half-width t_{n-1, 1-alpha/2} * sqrt(s^2 / n); full CI width is twice this."""
    if acc.n < 2:
        raise StatsError("confidence interval requires at least 2 samples")
    s2 = acc.variance
    if s2 == 0.0:
        return 0.0
    return t_quantile(acc.n - 1, 1.0 - alpha / 2.0) * math.sqrt(s2 / acc.n)


def welch_test(acc_a: SampleAccumulator, acc_b: SampleAccumulator) -> WelchResult:
    """Welch's two-sample t-test with Welch-Satterthwaite degrees of freedom.

    Degenerate zero-variance inputs resolve by continuity: both constant and
    equal -> p = 1; constant and different -> p = 0.
    """
    if acc_a.n < 2 or acc_b.n < 2:
        raise StatsError("welch_test requires at least 2 samples per side")
    va, vb = acc_a.variance, acc_b.variance
    na, nb = acc_a.n, acc_b.n
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    if se2 == 0.0:
        dof = float(na + nb - 2)
        if acc_a.mean == acc_b.mean:
            return WelchResult(0.0, dof, 1.0)
        t = math.inf if acc_a.mean > acc_b.mean else -math.inf
        return WelchResult(t, dof, 0.0)
    t = (acc_a.mean - acc_b.mean) / math.sqrt(se2)
    dof = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    p = 2.0 * (1.0 - t_cdf(abs(t), dof))
    p = min(max(p, 0.0), 1.0)
    return WelchResult(t, dof, p)


# ---------------------------------------------------------------------------
# Diagnostics used by the warm-up detector
# ---------------------------------------------------------------------------

def lag1_autocorr(xs) -> float:
    """Lag-1 sample autocorrelation; 0.0 for degenerate (constant) input."""
    n = len(xs)
    if n < 3:
        raise StatsError("lag-1 autocorrelation requires at least 3 values")
    mean = sum(xs) / n
    denom = sum((x - mean) ** 2 for x in xs)
    if denom == 0.0:
        return 0.0
    num = sum((xs[i] - mean) * (xs[i + 1] - mean) for i in range(n - 1))
    return num / denom


def jarque_bera(xs) -> tuple[float, float]:
    """Jarque-Bera normality statistic and its asymptotic chi2(2) p-value.

    chi2(2) has the closed-form survival function exp(-x/2).  Constant input
    is treated as trivially stable (statistic 0, p 1).
    """
    n = len(xs)
    if n < 4:
        raise StatsError("jarque_bera requires at least 4 values")
    mean = sum(xs) / n
    m2 = sum((x - mean) ** 2 for x in xs) / n
    if m2 == 0.0:
        return 0.0, 1.0
    m3 = sum((x - mean) ** 3 for x in xs) / n
    m4 = sum((x - mean) ** 4 for x in xs) / n
    skew = m3 / m2 ** 1.5
    kurt = m4 / (m2 * m2)
    jb = n / 6.0 * (skew * skew + (kurt - 3.0) ** 2 / 4.0)
    return jb, math.exp(-jb / 2.0)
