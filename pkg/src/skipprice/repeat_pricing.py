"""Pricing policies for repeated tasks with insensitive players.

Covers the known-types optimum under a retention threshold, Myerson posted
prices on marginal-value distributions, the combined threshold/Myerson (MT)
policy with optional scaling, a two-block discrete pricing example, and the
equal-revenue gap construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dists import (
    Empirical,
    EqualRevenue,
    ScalarDistribution,
    TwoPointDiscrete,
    truncate,
)


class NotRegular(Exception):
    """Retention regularity check failed for this model."""


@dataclass(frozen=True)
class RetentionModel:
    """Retention threshold distribution plus the designer's discount."""

    dist: ScalarDistribution
    beta: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must be in (0, 1]")
        if self.dist.support[0] != 0.0:
            raise ValueError("retention support must start at 0")


@dataclass(frozen=True)
class PricingScheme:
    """Marker base for per-task pricing rules used by the simulator."""


@dataclass(frozen=True)
class KnownTypes(PricingScheme):
    """Charge each player min of their marginal value and the threshold."""


@dataclass(frozen=True)
class MyersonOnly(PricingScheme):
    """Post the Myerson price of the current empirical marginal."""


@dataclass(frozen=True)
class RetentionThresholdOnly(PricingScheme):
    """Post the retention threshold price every round."""


@dataclass(frozen=True)
class MyersonThreshold(PricingScheme):
    """Post min(threshold, scale * empirical Myerson price)."""

    scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.scale <= 1.0):
            raise ValueError("scale must be in (0, 1]")


# the scaled variant is the same rule with scale < 1
ScaledMyersonThreshold = MyersonThreshold


@dataclass(frozen=True)
class FixedPrice(PricingScheme):
    """Post the same price every round."""

    p: float

    def __post_init__(self):
        if self.p < 0.0:
            raise ValueError("price must be non-negative")


@dataclass(frozen=True)
class RegularityReport:
    is_regular: bool
    skipped: int = 0
    worst_violation: float = 0.0

    def __bool__(self) -> bool:
        return self.is_regular


def retention_regular(rm: RetentionModel, v: float, grid_n: int = 1000) -> RegularityReport:
    """Checks that x - (1 - beta F_r(v-x)) / (beta f_r(v-x)) is non-decreasing
    on [0, v]. Grid points with zero retention density are skipped and
    counted in the report."""
    if grid_n < 100:
        raise ValueError("grid_n must be >= 100")
    xs = np.linspace(0.0, v, grid_n)
    dens = np.asarray(rm.dist.pdf(v - xs), dtype=float)
    keep = dens > 0.0
    skipped = int((~keep).sum())
    xs, dens = xs[keep], dens[keep]
    if xs.size < 2:
        return RegularityReport(False, skipped, math.inf)
    cdf = np.asarray(rm.dist.cdf(v - xs), dtype=float)
    expr = xs - (1.0 - rm.beta * cdf) / (rm.beta * dens)
    diffs = np.diff(expr)
    worst = float(max(0.0, -diffs.min()))
    return RegularityReport(worst <= 1e-9, skipped, worst)


class ThresholdResult(NamedTuple):
    q: float
    binding: bool


def retention_threshold(rm: RetentionModel, v: float) -> ThresholdResult:
    """Solves q = (1 - beta F_r(v-q)) / (beta f_r(v-q)) by bisection.

    When the residual never changes sign on (0, v) the threshold does not
    bind below the value; q = v is returned with binding = False.
    """
    if not retention_regular(rm, v):
        raise NotRegular("retention model fails the regularity check")

    def g(q: float) -> float:
        return q * rm.beta * float(rm.dist.pdf(v - q)) - (
            1.0 - rm.beta * float(rm.dist.cdf(v - q))
        )

    lo, hi = 1e-12, v
    if g(lo) >= 0.0:
        return ThresholdResult(lo, True)
    if g(hi) < 0.0:
        return ThresholdResult(v, False)
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return ThresholdResult(0.5 * (lo + hi), True)


def retention_threshold_price(rm: RetentionModel, v: float) -> float:
    return retention_threshold(rm, v).q


def known_types_price(gamma: float, v: float, rm: RetentionModel) -> float:
    """min of the player's marginal value and the retention threshold."""
    return min((1.0 - gamma) * v, retention_threshold_price(rm, v))


def static_price_revenue(gamma: float, v: float, rm: RetentionModel, p: float) -> float:
    """Discounted revenue of a static price p against a single known type."""
    if p > (1.0 - gamma) * v + 1e-15:
        return 0.0
    if p <= 0.0:
        return 0.0
    return p / (1.0 - rm.beta * float(rm.dist.cdf(v - p)))


def known_types_revenue(gamma: float, v: float, rm: RetentionModel) -> float:
    return static_price_revenue(gamma, v, rm, known_types_price(gamma, v, rm))


def myerson_price(marginal: ScalarDistribution) -> float:
    """Revenue-optimal posted price on a marginal-value distribution.

    Continuous kinds: root of p = (1-F(p))/f(p), refined by bisection after
    a grid scan. Empirical kind: exact scan over the observed order
    statistics, ties toward the higher price.
    """
    if isinstance(marginal, Empirical):
        xs = marginal.samples
        n = xs.size
        count_ge = n - np.searchsorted(xs, xs, side="left")
        revs = xs * count_ge / n
        idx = len(revs) - 1 - int(np.argmax(revs[::-1]))
        return float(xs[idx])
    lo, hi = marginal.support
    if math.isinf(hi):
        hi = float(marginal.quantile(1.0 - 1e-9))
    grid = np.linspace(lo, hi, 4001)[1:-1]
    dens = np.asarray(marginal.pdf(grid), dtype=float)
    resid = grid * dens - np.asarray(marginal.sf(grid), dtype=float)
    signs = resid < 0.0
    if signs.all() or not signs.any():
        revs = grid * np.asarray(marginal.sf(grid))
        idx = len(revs) - 1 - int(np.argmax(revs[::-1]))
        return float(grid[idx])
    # bracket the first sign change from below
    flips = np.where(np.diff(signs.astype(int)) != 0)[0]
    a, b = float(grid[flips[0]]), float(grid[flips[0] + 1])

    def g(p: float) -> float:
        return p * float(marginal.pdf(p)) - float(marginal.sf(p))

    while b - a > 1e-10 * max(1.0, hi):
        mid = 0.5 * (a + b)
        if g(mid) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def mt_price(
    marginal: ScalarDistribution, rm: RetentionModel, v: float, scale: float = 1.0
) -> float:
    """min(retention threshold, scale * Myerson price)."""
    if not (0.0 < scale <= 1.0):
        raise ValueError("scale must be in (0, 1]")
    return min(retention_threshold_price(rm, v), scale * myerson_price(marginal))


def truncation_update(
    marginal: ScalarDistribution, gamma_star: float, v: float
) -> ScalarDistribution:
    """Marginal-value distribution of the survivors after everyone with
    marginal value above (1 - gamma_star) v has churned."""
    lo, hi = marginal.support
    cut = (1.0 - gamma_star) * v
    return truncate(marginal, lo, min(cut, hi))


class MultiBlockResult(NamedTuple):
    revenue: float
    choices: tuple[str, ...]


def multi_block_revenue(
    types: TwoPointDiscrete, v: float, p0: float, p1: float
) -> MultiBlockResult:
    """Two-block pricing on a discrete type distribution.

    Each type compares buying both blocks now ((1-gamma^2) v - p0), waiting
    one block and buying the last (gamma ((1-gamma) v - p1), discounted by
    the player's own patience), or never buying. Ties break toward the
    earlier purchase. Payments accrue to the designer at face value.
    """
    revenue = 0.0
    choices = []
    for gamma, prob in zip(types.values, types.probabilities):
        u_now = (1.0 - gamma * gamma) * v - p0
        u_wait = gamma * ((1.0 - gamma) * v - p1)
        options = [(u_now, 0, p0, "now"), (u_wait, 1, p1, "wait"), (0.0, 2, 0.0, "never")]
        options.sort(key=lambda o: (-o[0], o[1]))
        _, _, payment, label = options[0]
        revenue += prob * payment
        choices.append(label)
    return MultiBlockResult(revenue, tuple(choices))


def single_price_revenue(types: TwoPointDiscrete, v: float, p: float) -> float:
    """Two-block revenue when the same price is posted in both blocks."""
    return multi_block_revenue(types, v, p, p).revenue


class GapResult(NamedTuple):
    known_rev: float
    best_fixed_rev: float


def equal_revenue_gap(c: float, grid_n: int = 10_001) -> GapResult:
    """Revenue gap on equal-revenue marginal values supported on [1, e^c].

    Knowing types extracts the full integral of the marginal value, which
    equals c; any fixed posted price earns exactly 1.
    """
    if c <= 0.0:
        raise ValueError("c must be positive")
    from scipy import integrate

    v = math.exp(c)
    d = EqualRevenue()
    known, _ = integrate.quad(lambda x: x * float(d.pdf(x)), 1.0, v, limit=400)
    grid = np.geomspace(1.0, v, grid_n)
    fixed = grid * np.asarray(d.sf(grid), dtype=float)
    return GapResult(float(known), float(fixed.max()))
