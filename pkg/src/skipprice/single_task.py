"""Single-task expected utility and revenue, optimal-price search, and the
no-sale / frontier / floor condition checkers; also generates figure data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import integrate

from . import valuefn
from .dists import ScalarDistribution, impatience_view
from .valuefn import Insensitive, ValueFunction, clinear_build


class ConditionNotMet(Exception):
    """Cor-4.5 floor requested while the no-sale condition fails."""


DEFAULT_GRID_N = 10_000
DEFAULT_REFINE_TOL = 1e-6


def _sale_ratio(vf: ValueFunction, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """p / v(p), with the 0/0 at the origin replaced by its limit 1/v'(0)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(v > 0.0, p / np.where(v > 0.0, v, 1.0), np.inf)
    tiny = p < 1e-12
    if np.any(tiny):
        if isinstance(vf, Insensitive):
            s0 = 0.0
        else:
            d0 = vf.derivative(0.0)
            s0 = 0.0 if math.isinf(d0) else 1.0 / d0
        s = np.where(tiny, s0, s)
    return s


def _tail_moment_fn(type_dist: ScalarDistribution, n: int = 200_001):
    """Returns (m, mean) with m(t) = integral of z f(z) dz over (t, 1]."""
    zs = np.linspace(0.0, 1.0, n)
    integrand = zs * np.asarray(type_dist.pdf(zs))
    cum = integrate.cumulative_trapezoid(integrand, zs, initial=0.0)
    total = float(cum[-1])

    def m(t):
        return total - np.interp(np.clip(t, 0.0, 1.0), zs, cum)

    return m, total


def expected_utility(type_dist: ScalarDistribution, vf: ValueFunction, p: float) -> float:
    """Population expected utility at price p: buyers get v - p, non-buyers
    keep their discounted value."""
    v = float(vf.eval(p))
    if v <= 0.0:
        return 0.0
    t = 1.0 - float(_sale_ratio(vf, np.asarray([p]), np.asarray([v]))[0])
    if t <= 0.0:
        return type_dist.mean() * v
    t = min(t, 1.0)
    f_t = float(type_dist.cdf(t))
    buyers = f_t * (v - p)
    if f_t >= 1.0 - 1e-15:
        return buyers
    non_buyers = (1.0 - f_t) * type_dist.cond_expect_above(t) * v
    return buyers + non_buyers


def expected_revenue(type_dist: ScalarDistribution, vf: ValueFunction, p: float) -> float:
    """p times the probability that a player's marginal value covers p."""
    return float(revenue_curve(type_dist, vf, np.asarray([p]))[0])


def utility_curve(
    type_dist: ScalarDistribution, vf: ValueFunction, ps: np.ndarray, _moment=None
) -> np.ndarray:
    """Vectorized expected utility over a price grid."""
    ps = np.asarray(ps, dtype=float)
    v = np.asarray(vf.eval(ps), dtype=float)
    s = _sale_ratio(vf, ps, v)
    t = np.clip(1.0 - s, 0.0, 1.0)
    moment = _moment if _moment is not None else _tail_moment_fn(type_dist)[0]
    f_t = np.asarray(type_dist.cdf(t))
    out = f_t * (v - ps) + moment(t) * v
    return np.where(v > 0.0, out, 0.0)


def revenue_curve(
    type_dist: ScalarDistribution, vf: ValueFunction, ps: np.ndarray
) -> np.ndarray:
    """Vectorized expected revenue p * (1 - F_impatience(p / v(p)))."""
    ps = np.asarray(ps, dtype=float)
    v = np.asarray(vf.eval(ps), dtype=float)
    s = _sale_ratio(vf, ps, v)
    iv = impatience_view(type_dist)
    sale_prob = np.where(s <= 1.0, np.asarray(iv.sf(np.minimum(s, 1.0))), 0.0)
    return np.where(v > 0.0, ps * sale_prob, 0.0)


def _golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:  # keep ties moving toward the higher price
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def optimal_price(
    objective: Literal["utility", "revenue"],
    type_dist: ScalarDistribution,
    vf: ValueFunction,
    grid_n: int = DEFAULT_GRID_N,
    refine_tol: float = DEFAULT_REFINE_TOL,
) -> tuple[float, float]:
    """Grid scan over [0, p̄] plus golden-section refinement; ties break
    toward the higher price."""
    if grid_n < 100:
        raise ValueError("grid_n must be >= 100")
    p_bar = vf.p_nosale
    ps = np.linspace(0.0, p_bar, grid_n)
    if objective not in ("utility", "revenue"):
        raise ValueError(f"unknown objective {objective!r}")
    moment = _tail_moment_fn(type_dist)[0] if objective == "utility" else None
    if objective == "utility":
        ys = utility_curve(type_dist, vf, ps, moment)
        f = lambda p: float(utility_curve(type_dist, vf, np.asarray([p]), moment)[0])
    else:
        ys = revenue_curve(type_dist, vf, ps)
        f = lambda p: float(revenue_curve(type_dist, vf, np.asarray([p]))[0])
    idx = len(ys) - 1 - int(np.argmax(ys[::-1]))
    a = ps[max(idx - 1, 0)]
    b = ps[min(idx + 1, grid_n - 1)]
    x, fx = _golden_section_max(f, a, b, refine_tol)
    best_p = x if fx >= ys[idx] else float(ps[idx])
    if objective == "utility":
        # report the adaptive-quadrature value, not the gridded moment
        return best_p, expected_utility(type_dist, vf, best_p)
    return best_p, float(revenue_curve(type_dist, vf, np.asarray([best_p]))[0])


@dataclass(frozen=True)
class NoSaleReport:
    holds: bool
    lhs: float
    rhs: float


def nosale_condition(type_dist: ScalarDistribution, vf: ValueFunction) -> NoSaleReport:
    """Sufficient condition for the utility-optimal price to sit at p̄:
    F(1 - 1/v'(0)) <= v'(p̄) / (1 - v'(p̄)) * E[gamma]."""
    d0 = vf.derivative(0.0)
    arg = 1.0 if math.isinf(d0) else (d0 - 1.0) / d0
    lhs = float(type_dist.cdf(arg))
    d_bar = vf.derivative(vf.p_nosale)
    if d_bar >= 1.0:
        rhs = math.inf
    elif d_bar <= 0.0:
        rhs = 0.0
    else:
        rhs = d_bar / (1.0 - d_bar) * type_dist.mean()
    return NoSaleReport(lhs <= rhs, lhs, rhs)


@dataclass(frozen=True)
class FrontierReport:
    frontier: float
    crossing: float | None


def _slope(vf: ValueFunction, p: float) -> float:
    if isinstance(vf, Insensitive):
        return 0.0
    d = vf.derivative(p)
    return d if not math.isinf(d) else math.inf


def lemma44_frontier(
    type_dist: ScalarDistribution,
    vf: ValueFunction,
    grid_n: int = DEFAULT_GRID_N,
    refine_tol: float = DEFAULT_REFINE_TOL,
) -> FrontierReport:
    """Largest p* such that the inverse-hazard lower bound on the impatience
    distribution holds on all of (0, p*]; under MHR impatience also returns
    the equality crossing, which pins the revenue-optimal price."""
    from .dists import is_mhr

    p_bar = vf.p_nosale
    iv = impatience_view(type_dist)
    ps = np.linspace(p_bar / grid_n, p_bar * (1.0 - 1e-9), grid_n)
    v = np.asarray(vf.eval(ps), dtype=float)
    s = _sale_ratio(vf, ps, v)
    dens = np.asarray(iv.pdf(np.clip(s, 0.0, 1.0)))
    with np.errstate(divide="ignore"):
        lhs = np.where(dens > 0.0, np.asarray(iv.sf(np.clip(s, 0.0, 1.0))) / dens, np.inf)
    slopes = np.array([_slope(vf, float(p)) for p in ps])
    with np.errstate(invalid="ignore"):
        corr = 1.0 - ps * slopes / v
    corr = np.where(np.isinf(slopes), -np.inf, corr)
    rhs = s * corr
    ok = lhs >= rhs - 1e-12
    if not ok[0]:
        return FrontierReport(0.0, None)
    first_bad = int(np.argmin(ok)) if not ok.all() else grid_n
    frontier = float(ps[first_bad - 1]) if first_bad < grid_n else float(ps[-1])
    crossing = None
    if is_mhr(iv, 2000).is_mhr and first_bad < grid_n:
        g = lambda p: _frontier_gap(type_dist, iv, vf, p)
        a, b = float(ps[first_bad - 1]), float(ps[first_bad])
        for _ in range(60):
            mid = 0.5 * (a + b)
            if g(mid) >= 0.0:
                a = mid
            else:
                b = mid
        crossing = 0.5 * (a + b)
    return FrontierReport(frontier, crossing)


def _frontier_gap(type_dist, iv, vf, p: float) -> float:
    v = float(vf.eval(p))
    s = float(_sale_ratio(vf, np.asarray([p]), np.asarray([v]))[0])
    dens = float(iv.pdf(min(s, 1.0)))
    lhs = float(iv.sf(min(s, 1.0))) / dens if dens > 0 else math.inf
    rhs = s * (1.0 - p * _slope(vf, p) / v)
    return lhs - rhs


def cor45_floor(
    type_dist: ScalarDistribution,
    vf: ValueFunction,
    grid_n: int = DEFAULT_GRID_N,
    refine_tol: float = DEFAULT_REFINE_TOL,
) -> float:
    """Utility floor U_max - v'(p_rev) (p̄ - p_rev), valid under the no-sale
    condition."""
    if not nosale_condition(type_dist, vf).holds:
        raise ConditionNotMet("no-sale condition fails for this instance")
    _, u_max = optimal_price("utility", type_dist, vf, grid_n, refine_tol)
    p_rev, _ = optimal_price("revenue", type_dist, vf, grid_n, refine_tol)
    floor = u_max - _slope(vf, p_rev) * (vf.p_nosale - p_rev)
    assert expected_utility(type_dist, vf, p_rev) >= floor - 1e-9
    return floor


@dataclass(frozen=True)
class SingleTaskReport:
    p_util: float
    u_max: float
    p_rev: float
    rev_max: float
    nosale_condition_holds: bool
    lemma44_frontier: float
    cor45_floor: float

    def as_dict(self) -> dict:
        return {
            "p_util": self.p_util,
            "u_max": self.u_max,
            "p_rev": self.p_rev,
            "rev_max": self.rev_max,
            "nosale_condition_holds": self.nosale_condition_holds,
            "lemma44_frontier": self.lemma44_frontier,
            "cor45_floor": self.cor45_floor,
        }


def analyze(
    type_dist: ScalarDistribution,
    vf: ValueFunction,
    grid_n: int = DEFAULT_GRID_N,
    refine_tol: float = DEFAULT_REFINE_TOL,
) -> SingleTaskReport:
    p_util, u_max = optimal_price("utility", type_dist, vf, grid_n, refine_tol)
    p_rev, rev_max = optimal_price("revenue", type_dist, vf, grid_n, refine_tol)
    cond = nosale_condition(type_dist, vf)
    frontier = lemma44_frontier(type_dist, vf, grid_n, refine_tol).frontier
    floor = math.nan
    if cond.holds:
        floor = u_max - _slope(vf, p_rev) * (vf.p_nosale - p_rev)
    return SingleTaskReport(p_util, u_max, p_rev, rev_max, cond.holds, frontier, floor)


# -- figure families ---------------------------------------------------------


@dataclass(frozen=True)
class SweepEntry:
    label: str
    lam: float | None
    tau: float | None
    type_dist: ScalarDistribution
    vf: ValueFunction


def fig2_family() -> list[SweepEntry]:
    from .dists import ImpatienceExponential
    from .valuefn import PriceSensitivePoly

    vf = PriceSensitivePoly(k=4, p_bar=1.0)
    return [
        SweepEntry(f"exp_lam{lam:g}", lam, None, ImpatienceExponential(lam), vf)
        for lam in (1.0, 3.0, 10.0)
    ]


def fig3_family() -> list[SweepEntry]:
    from .dists import FlattenedTailImpatienceExponential
    from .valuefn import PriceSensitivePoly

    vf = PriceSensitivePoly(k=4, p_bar=1.0)
    return [
        SweepEntry(
            f"flat_lam10_tau{tau:g}",
            10.0,
            tau,
            FlattenedTailImpatienceExponential(10.0, tau),
            vf,
        )
        for tau in (1.0, 0.35, 0.25)
    ]


def fig4_family() -> list[SweepEntry]:
    from .dists import ImpatienceExponential

    out = []
    for lam in (1.0, 5.0):
        dist = ImpatienceExponential(lam)
        out.append(SweepEntry(f"clin_lam{lam:g}", lam, None, dist, clinear_build(1.0, dist)))
    return out


def fig5_family() -> list[SweepEntry]:
    from .dists import FlattenedTailImpatienceExponential

    out = []
    for tau in (1.0, 0.5, 0.4):
        dist = FlattenedTailImpatienceExponential(8.0, tau)
        out.append(
            SweepEntry(f"clin_lam8_tau{tau:g}", 8.0, tau, dist, clinear_build(1.0, dist))
        )
    return out


def fig6_family() -> list[SweepEntry]:
    from .dists import FlattenedTailImpatienceExponential

    out = []
    for lam, tau in ((10.0, 1.0), (20.0, 0.25)):
        dist = FlattenedTailImpatienceExponential(lam, tau)
        out.append(
            SweepEntry(
                f"clin_lam{lam:g}_tau{tau:g}", lam, tau, dist, clinear_build(1.0, dist)
            )
        )
    return out


FAMILIES: dict[str, Callable[[], list[SweepEntry]]] = {
    "fig2": fig2_family,
    "fig3": fig3_family,
    "fig4": fig4_family,
    "fig5": fig5_family,
    "fig6": fig6_family,
}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def figure_sweep(
    entries: Sequence[SweepEntry],
    out_dir: str | Path,
    grid_n: int = DEFAULT_GRID_N,
    curve_points: int = 500,
) -> list[dict]:
    """Optimize each family member and write the figure CSVs.

    `sweep.csv` has one row per entry; `curve_<label>.csv` samples
    (p, v, utility, revenue) at `curve_points` prices.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for e in entries:
        rep = analyze(e.type_dist, e.vf, grid_n)
        rows.append(
            {
                "param": e.label,
                "lambda": e.lam,
                "tau": e.tau,
                "p_util": rep.p_util,
                "p_rev": rep.p_rev,
                "u_at_putil": rep.u_max,
                "rev_at_prev": rep.rev_max,
            }
        )
        ps = np.linspace(0.0, e.vf.p_nosale, curve_points)
        vs = np.asarray(e.vf.eval(ps))
        us = utility_curve(e.type_dist, e.vf, ps)
        rs = revenue_curve(e.type_dist, e.vf, ps)
        with open(out_dir / f"curve_{e.label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "v", "utility", "revenue"])
            for row in zip(ps, vs, us, rs):
                w.writerow([_fmt(float(x)) for x in row])
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "lambda", "tau", "p_util", "p_rev", "u_at_putil", "rev_at_prev"])
        for r in rows:
            w.writerow([_fmt(r[k]) for k in ("param", "lambda", "tau", "p_util", "p_rev", "u_at_putil", "rev_at_prev")])
    return rows
