"""Probability distributions used by the pricing model.

All continuous distributions expose cdf/pdf/quantile/mean queries plus the
inverse hazard rate machinery needed by the optimizers. Objects are immutable
after construction; sampling takes a caller-owned RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate


class DistError(Exception):
    """Base class for distribution query errors."""


class ZeroDensity(DistError):
    """Inverse hazard rate queried where the density vanishes."""


class EmptyMass(DistError):
    """Truncation interval carries no probability mass."""


class EmptyTail(DistError):
    """Conditional expectation above a point with zero tail mass."""


class UnsupportedQuery(DistError):
    """Query (e.g. pdf) not defined for this distribution kind."""


_QUANTILE_ITERS = 100


class ScalarDistribution:
    """One-dimensional probability law.

    Subclasses implement `cdf`, `pdf` and `support`; everything else has
    generic implementations (quantile by bisection, inverse-transform
    sampling, quad-based moments).
    """

    #: (lo, hi); hi may be math.inf
    support: tuple[float, float] = (0.0, 1.0)

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        """Survival function 1 - F(x); overridden where the subtraction
        would lose precision deep in the tail."""
        return 1.0 - self.cdf(x)

    # -- generic machinery -------------------------------------------------

    def quantile(self, u):
        """Inverse cdf by vectorized bisection (abs tol ~1e-10)."""
        u = np.asarray(u, dtype=float)
        lo_s, hi_s = self.support
        hi = hi_s
        if math.isinf(hi):
            hi = max(1.0, lo_s + 1.0)
            while self.cdf(hi) < 1.0 - 1e-15:
                hi *= 2.0
                if hi > 1e18:
                    break
        lo = np.full(u.shape, float(lo_s))
        hi = np.full(u.shape, float(hi))
        for _ in range(_QUANTILE_ITERS):
            mid = 0.5 * (lo + hi)
            below = np.asarray(self.cdf(mid)) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return out if out.shape else float(out)

    def sample(self, rng: np.random.Generator, n: int):
        """n i.i.d. draws via inverse transform; deterministic given rng."""
        if n == 0:
            return np.empty(0)
        return np.asarray(self.quantile(rng.random(n)), dtype=float)

    def inverse_hazard(self, x):
        """(1 - F(x)) / f(x); raises ZeroDensity where f(x) = 0."""
        f = self.pdf(x)
        if np.any(np.asarray(f) <= 0.0):
            raise ZeroDensity(f"pdf vanishes at {x!r}")
        return self.sf(x) / f

    def mean(self) -> float:
        lo, hi = self.support
        val, _ = integrate.quad(lambda t: t * self.pdf(t), lo, hi, limit=200)
        return val

    def cond_expect_above(self, t: float) -> float:
        """E[X | X > t] by adaptive quadrature."""
        lo, hi = self.support
        tail = 1.0 - self.cdf(t)
        if tail <= 1e-15:
            raise EmptyTail(f"no mass above {t}")
        t = max(t, lo)
        val, _ = integrate.quad(
            lambda s: s * self.pdf(s), t, hi, limit=200, epsrel=1e-9
        )
        return val / tail


class MhrReport(NamedTuple):
    is_mhr: bool
    worst_violation: float

    def __bool__(self) -> bool:
        return self.is_mhr


def is_mhr(d: ScalarDistribution, grid_n: int = 10_000) -> MhrReport:
    """Check that the inverse hazard rate is non-increasing on a grid.

    Returns the verdict and the largest positive successive difference
    (0.0 when the rate never increases). Tolerance 1e-9 absolute.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    lo, hi = d.support
    if math.isinf(hi):
        hi = float(d.quantile(1.0 - 1e-9))
    width = hi - lo
    xs = np.linspace(lo + 1e-12 * max(1.0, width), hi - 1e-12 * max(1.0, width), grid_n)
    ih = np.asarray(d.inverse_hazard(xs), dtype=float)
    diffs = np.diff(ih)
    worst = float(diffs.max()) if diffs.size else 0.0
    return MhrReport(worst <= 1e-9, max(worst, 0.0))


# -- concrete kinds ---------------------------------------------------------


@dataclass(frozen=True)
class UniformUnit(ScalarDistribution):
    """Uniform distribution on [0, 1]."""

    support = (0.0, 1.0)

    def cdf(self, x):
        return np.clip(x, 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where((x >= 0.0) & (x <= 1.0), 1.0, 0.0)
        return out if out.shape else float(out)

    def quantile(self, u):
        return np.asarray(u, dtype=float) * 1.0

    def mean(self):
        return 0.5


@dataclass(frozen=True)
class Exponential(ScalarDistribution):
    """Exponential(rate) on [0, inf)."""

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    @property
    def support(self):
        return (0.0, math.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= 0.0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))
        return out if out.shape else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0.0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)))
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))
        return out if out.shape else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        out = -np.log1p(-u) / self.rate
        return out if out.shape else float(out)

    def mean(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class Lomax(ScalarDistribution):
    """Lomax (shifted Pareto, scale 1): F(x) = 1 - (1+x)^(-alpha) on [0, inf)."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1 for a finite mean")

    @property
    def support(self):
        return (0.0, math.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= 0.0, 0.0, 1.0 - (1.0 + np.maximum(x, 0.0)) ** (-self.alpha))
        return out if out.shape else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(
            x < 0.0, 0.0, self.alpha * (1.0 + np.maximum(x, 0.0)) ** (-self.alpha - 1.0)
        )
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= 0.0, 1.0, (1.0 + np.maximum(x, 0.0)) ** (-self.alpha))
        return out if out.shape else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        out = (1.0 - u) ** (-1.0 / self.alpha) - 1.0
        return out if out.shape else float(out)

    def mean(self):
        return 1.0 / (self.alpha - 1.0)


@dataclass(frozen=True)
class EqualRevenue(ScalarDistribution):
    """Equal-revenue law F(x) = 1 - 1/x on [1, inf): every posted price earns 1."""

    @property
    def support(self):
        return (1.0, math.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= 1.0, 0.0, 1.0 - 1.0 / np.maximum(x, 1.0))
        return out if out.shape else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 1.0, 0.0, 1.0 / np.maximum(x, 1.0) ** 2)
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= 1.0, 1.0, 1.0 / np.maximum(x, 1.0))
        return out if out.shape else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        out = 1.0 / (1.0 - u)
        return out if out.shape else float(out)


def _trunc_exp_cdf(t, rate):
    """CDF of Exp(rate) truncated and renormalized to [0, 1]."""
    t = np.asarray(t, dtype=float)
    z = -math.expm1(-rate)
    out = np.clip(-np.expm1(-rate * np.clip(t, 0.0, 1.0)) / z, 0.0, 1.0)
    return out


def _trunc_exp_pdf(t, rate):
    t = np.asarray(t, dtype=float)
    z = -math.expm1(-rate)
    out = np.where(
        (t >= 0.0) & (t <= 1.0), rate * np.exp(-rate * np.clip(t, 0.0, 1.0)) / z, 0.0
    )
    return out


@dataclass(frozen=True)
class ImpatienceExponential(ScalarDistribution):
    """Type distribution over patience gamma in [0, 1].

    Impatience 1 - gamma follows Exp(rate) truncated and renormalized to
    [0, 1], so larger rates concentrate the population on patient players.
    """

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    support = (0.0, 1.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = 1.0 - _trunc_exp_cdf(1.0 - x, self.rate)
        out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, out))
        return out if out.shape else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = _trunc_exp_pdf(1.0 - x, self.rate)
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = _trunc_exp_cdf(1.0 - x, self.rate)
        out = np.where(x <= 0.0, 1.0, np.where(x >= 1.0, 0.0, out))
        return out if out.shape else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        z = -math.expm1(-self.rate)
        # invert F(x) = (exp(-rate*(1-x)) - exp(-rate)) / z
        out = 1.0 + np.log(u * z + math.exp(-self.rate)) / self.rate
        out = np.clip(out, 0.0, 1.0)
        return out if out.shape else float(out)


@dataclass(frozen=True)
class FlattenedTailImpatienceExponential(ScalarDistribution):
    """Type distribution whose impatience density is a truncated exponential
    on [0, tau], held constant at its value at tau on (tau, 1], renormalized.

    tau = 1 reduces to ImpatienceExponential.
    """

    rate: float
    tau: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")

    support = (0.0, 1.0)

    @property
    def _norm(self) -> float:
        # mass of the unnormalized flattened impatience density
        g_tau = float(_trunc_exp_pdf(self.tau, self.rate))
        return float(_trunc_exp_cdf(self.tau, self.rate)) + g_tau * (1.0 - self.tau)

    def _imp_cdf(self, t):
        t = np.asarray(t, dtype=float)
        g_tau = float(_trunc_exp_pdf(self.tau, self.rate))
        head = _trunc_exp_cdf(np.minimum(t, self.tau), self.rate)
        tail = g_tau * np.clip(t - self.tau, 0.0, 1.0 - self.tau)
        return np.clip((head + tail) / self._norm, 0.0, 1.0)

    def _imp_pdf(self, t):
        t = np.asarray(t, dtype=float)
        g_tau = float(_trunc_exp_pdf(self.tau, self.rate))
        out = np.where(
            t <= self.tau, _trunc_exp_pdf(np.clip(t, 0.0, 1.0), self.rate), g_tau
        )
        out = np.where((t < 0.0) | (t > 1.0), 0.0, out)
        return out / self._norm

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = 1.0 - self._imp_cdf(1.0 - x)
        out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, out))
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = self._imp_cdf(1.0 - x)
        out = np.where(x <= 0.0, 1.0, np.where(x >= 1.0, 0.0, out))
        return out if out.shape else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = self._imp_pdf(1.0 - x)
        return out if out.shape else float(out)


@dataclass(frozen=True)
class TwoPointDiscrete(ScalarDistribution):
    """Two-atom discrete distribution."""

    values: tuple[float, float]
    probabilities: tuple[float, float]

    def __post_init__(self):
        if len(self.values) != 2 or len(self.probabilities) != 2:
            raise ValueError("expects exactly two atoms")
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        if self.values[0] >= self.values[1]:
            raise ValueError("values must be strictly increasing")

    @property
    def support(self):
        return (self.values[0], self.values[1])

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        v0, v1 = self.values
        p0, _ = self.probabilities
        out = np.where(x < v0, 0.0, np.where(x < v1, p0, 1.0))
        return out if out.shape else float(out)

    def pdf(self, x):
        raise UnsupportedQuery("discrete distribution has no density")

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        v0, v1 = self.values
        p0, _ = self.probabilities
        out = np.where(u <= p0, v0, v1)
        return out if out.shape else float(out)

    def mean(self):
        return float(np.dot(self.values, self.probabilities))


class Empirical(ScalarDistribution):
    """Empirical distribution over observed samples.

    The cdf is the right-continuous step function; density queries are an
    error (revenue-curve maximization is used instead of hazard formulas).
    """

    def __init__(self, samples: Sequence[float]):
        arr = np.asarray(samples, dtype=float)
        if arr.size == 0:
            raise ValueError("empirical distribution needs samples")
        self.samples = np.sort(arr)

    @property
    def support(self):
        return (float(self.samples[0]), float(self.samples[-1]))

    def cdf(self, x):
        idx = np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right")
        out = idx / self.samples.size
        return out if np.asarray(x).shape else float(out)

    def pdf(self, x):
        raise UnsupportedQuery("empirical distribution has no density")

    def inverse_hazard(self, x):
        raise UnsupportedQuery("empirical distribution has no density")

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        n = self.samples.size
        idx = np.clip(np.ceil(u * n).astype(int) - 1, 0, n - 1)
        out = self.samples[idx]
        return out if u.shape else float(out)

    def mean(self):
        return float(self.samples.mean())


# -- wrappers ---------------------------------------------------------------


class Truncated(ScalarDistribution):
    """Base distribution conditioned on the interval [a, b]."""

    def __init__(self, base: ScalarDistribution, a: float, b: float):
        if a >= b:
            raise ValueError("need a < b")
        fa, fb = float(base.cdf(a)), float(base.cdf(b))
        if fb - fa <= 0.0:
            raise EmptyMass(f"no mass on [{a}, {b}]")
        self.base = base
        self.a, self.b = float(a), float(b)
        self._fa, self._fb = fa, fb

    @property
    def support(self):
        lo, _ = self.base.support
        return (max(self.a, lo), self.b)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        raw = (self.base.cdf(np.clip(x, self.a, self.b)) - self._fa) / (
            self._fb - self._fa
        )
        out = np.clip(raw, 0.0, 1.0)
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        raw = (self._fb - self.base.cdf(np.clip(x, self.a, self.b))) / (
            self._fb - self._fa
        )
        out = np.clip(raw, 0.0, 1.0)
        return out if out.shape else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        out = np.where(inside, self.base.pdf(x) / (self._fb - self._fa), 0.0)
        return out if out.shape else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        out = self.base.quantile(self._fa + u * (self._fb - self._fa))
        out = np.clip(out, *self.support)
        return out if np.asarray(out).shape else float(out)


class Scaled(ScalarDistribution):
    """Distribution of c * X for X ~ base, c > 0."""

    def __init__(self, base: ScalarDistribution, c: float):
        if c <= 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.c = float(c)

    @property
    def support(self):
        lo, hi = self.base.support
        return (self.c * lo, self.c * hi)

    def cdf(self, x):
        return self.base.cdf(np.asarray(x, dtype=float) / self.c)

    def sf(self, x):
        return self.base.sf(np.asarray(x, dtype=float) / self.c)

    def pdf(self, x):
        out = np.asarray(self.base.pdf(np.asarray(x, dtype=float) / self.c)) / self.c
        return out if out.shape else float(out)

    def quantile(self, u):
        out = np.asarray(self.base.quantile(u)) * self.c
        return out if out.shape else float(out)

    def mean(self):
        return self.c * self.base.mean()


class ImpatienceView(ScalarDistribution):
    """Distribution of impatience 1 - gamma for a type distribution over gamma."""

    def __init__(self, base: ScalarDistribution):
        lo, hi = base.support
        if lo < -1e-12 or hi > 1.0 + 1e-12:
            raise ValueError("type distribution must live on [0, 1]")
        self.base = base

    support = (0.0, 1.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = 1.0 - np.asarray(self.base.cdf(1.0 - x))
        out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, out))
        return out if out.shape else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.base.cdf(1.0 - x))
        out = np.where(x <= 0.0, 1.0, np.where(x >= 1.0, 0.0, out))
        return out if out.shape else float(out)

    def pdf(self, x):
        out = np.asarray(self.base.pdf(1.0 - np.asarray(x, dtype=float)))
        return out if out.shape else float(out)

    def quantile(self, u):
        out = 1.0 - np.asarray(self.base.quantile(1.0 - np.asarray(u, dtype=float)))
        return out if out.shape else float(out)


# -- module-level operations ------------------------------------------------


def truncate(d: ScalarDistribution, a: float, b: float) -> Truncated:
    """Condition d on [a, b]; raises EmptyMass when F(b) = F(a)."""
    return Truncated(d, a, b)


def impatience_view(type_dist: ScalarDistribution) -> ImpatienceView:
    return ImpatienceView(type_dist)


def marginal_value_dist(type_dist: ScalarDistribution, v: float) -> ScalarDistribution:
    """Distribution of (1 - gamma) * v on [0, v]; inherits MHR from impatience."""
    if v <= 0:
        raise ValueError("task value must be positive")
    return Scaled(ImpatienceView(type_dist), v)
