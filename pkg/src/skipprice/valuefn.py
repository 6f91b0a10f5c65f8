"""Player value functions: how the perceived value of a task depends on the
skip price.

Three classes: polynomial price-sensitive curves, constant (insensitive)
values with an activation threshold, and fully-sensitive curves that are
linear in the probability of sale for a given type distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dists import ScalarDistribution


class ValueFnError(Exception):
    pass


class NotDifferentiable(ValueFnError):
    """Derivative queried on the insensitive (step) kind."""


class NonMonotone(ValueFnError):
    """The price-as-a-function-of-value map failed strict monotonicity."""


_DERIV_INF_SLOPE = 1e6
_FD_STEP = 1e-6


class ValueFunction:
    """Non-decreasing, concave value-of-task curve with a no-sale plateau.

    `p_nosale` is the price p̄ with v(p̄) = p̄; the curve is constant beyond.
    """

    p_nosale: float

    def eval(self, p):
        raise NotImplementedError

    def derivative(self, p: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class PriceSensitivePoly(ValueFunction):
    """v(p) = p̄ (1 - (1 - p/p̄)^k) on [0, p̄], constant p̄ beyond.

    k = 4, p̄ = 1 gives the curve 1 - (p - 1)^4.
    """

    k: float
    p_bar: float = 1.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("exponent must be >= 2")
        if self.p_bar <= 0:
            raise ValueError("p_bar must be positive")

    @property
    def p_nosale(self) -> float:
        return self.p_bar

    def eval(self, p):
        p = np.asarray(p, dtype=float)
        t = np.clip(p / self.p_bar, 0.0, 1.0)
        out = self.p_bar * (1.0 - (1.0 - t) ** self.k)
        return out if out.shape else float(out)

    def derivative(self, p: float) -> float:
        if p > self.p_bar:
            return 0.0
        t = min(max(p / self.p_bar, 0.0), 1.0)
        return self.k * (1.0 - t) ** (self.k - 1.0)


@dataclass(frozen=True)
class Insensitive(ValueFunction):
    """Constant value `level` once the price exceeds `threshold`, else 0."""

    level: float
    threshold: float = 0.0

    def __post_init__(self):
        if self.level <= 0:
            raise ValueError("level must be positive")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")

    @property
    def p_nosale(self) -> float:
        return self.level

    def eval(self, p):
        p = np.asarray(p, dtype=float)
        out = np.where(p > self.threshold, self.level, 0.0)
        return out if out.shape else float(out)

    def derivative(self, p: float) -> float:
        raise NotDifferentiable("insensitive value functions have no derivative")


class CLinear(ValueFunction):
    """Fully-sensitive value function linear in the probability of sale.

    Solves c * (1 - F(1 - p/v)) = v by inverting the price-of-value map
    p(v) = v * (1 - Q(1 - v/c)) on a grid, where Q is the type quantile.
    Built via `clinear_build`.
    """

    def __init__(self, c: float, type_dist: ScalarDistribution, prices, values):
        self.c = float(c)
        self.type_dist = type_dist
        self._prices = np.asarray(prices, dtype=float)
        self._values = np.asarray(values, dtype=float)
        self.p_nosale = float(self._prices[-1])

    def eval(self, p):
        p = np.asarray(p, dtype=float)
        out = np.interp(np.minimum(p, self.p_nosale), self._prices, self._values)
        return out if out.shape else float(out)

    def derivative(self, p: float) -> float:
        if p > self.p_nosale:
            return 0.0
        h = _FD_STEP * max(1.0, self.p_nosale)
        lo = max(p - h, 0.0)
        hi = min(p + h, self.p_nosale)
        slope = (float(self.eval(hi)) - float(self.eval(lo))) / (hi - lo)
        return math.inf if slope > _DERIV_INF_SLOPE else slope


def clinear_build(
    c: float, type_dist: ScalarDistribution, grid_n: int = 2000
) -> CLinear:
    """Construct the c-linear value function for a continuous type
    distribution on [0, 1].

    Raises NonMonotone when the defining equation has no well-defined
    increasing solution for this distribution.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if grid_n < 100:
        raise ValueError("grid_n must be >= 100")
    values = np.linspace(c / grid_n, c, grid_n)
    prices = values * (1.0 - np.asarray(type_dist.quantile(1.0 - values / c)))
    if np.any(np.diff(prices) <= 0.0):
        raise NonMonotone("price-of-value map is not strictly increasing")
    prices = np.concatenate(([0.0], prices))
    values = np.concatenate(([0.0], values))
    return CLinear(c, type_dist, prices, values)


@dataclass(frozen=True)
class InsensitiveProjection:
    """Constant-value approximation of a sensitive curve, anchored where the
    slope crosses 1."""

    p_star: float
    v_const: float
    rev_ratio_bound: float


def insensitive_projection(vf: ValueFunction, tol: float = 1e-8) -> InsensitiveProjection:
    """Project a sensitive value function onto a constant one.

    p_star solves v'(p*) = 1 by bisection; when the slope exceeds 1 on the
    whole domain the projection degenerates to p_star = p̄ with ratio 1.
    """
    if isinstance(vf, Insensitive):
        raise NotDifferentiable("projection needs a differentiable value function")
    p_bar = vf.p_nosale
    hi = p_bar
    if vf.derivative(hi) > 1.0:
        v_end = float(vf.eval(p_bar))
        return InsensitiveProjection(p_bar, v_end, 1.0)
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if vf.derivative(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    p_star = 0.5 * (lo + hi)
    v_const = float(vf.eval(p_star))
    v_end = float(vf.eval(p_bar))
    return InsensitiveProjection(p_star, v_const, v_const / v_end)


def check_shape(vf: ValueFunction, grid_n: int = 1000) -> None:
    """Verify monotonicity and midpoint concavity of a sensitive curve on
    [0, p̄]; raises NonMonotone on failure."""
    ps = np.linspace(0.0, vf.p_nosale, grid_n)
    vs = np.asarray(vf.eval(ps))
    if np.any(np.diff(vs) < -1e-9):
        raise NonMonotone("value function decreases on its domain")
    mids = np.asarray(vf.eval(0.5 * (ps[:-1] + ps[1:])))
    if np.any(mids + 1e-9 < 0.5 * (vs[:-1] + vs[1:])):
        raise NonMonotone("value function fails midpoint concavity")
