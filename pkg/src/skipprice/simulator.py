"""Agent-based Monte-Carlo engine for repeated skip pricing.

Populations are flat numpy arrays of marginal values kept sorted ascending,
which makes the per-round empirical Myerson price an O(n) scan and lets
shared-retention churn slice off a contiguous suffix. All randomness is
derived from counter-based keyed hashing of (seed, stream, round, agent id),
so runs are deterministic and two runs differing only in pricing scheme see
identical type draws, retention thresholds, and recruitment events (common
random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .dists import Empirical, ScalarDistribution
from .repeat_pricing import (
    FixedPrice,
    KnownTypes,
    MyersonOnly,
    MyersonThreshold,
    PricingScheme,
    RetentionModel,
    RetentionThresholdOnly,
    retention_threshold_price,
)


class ConfigInvalid(Exception):
    pass


class EmptyPopulation(Exception):
    pass


class MismatchedConfigs(Exception):
    pass


# -- keyed counter-based randomness -------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53

# stream constants
_STREAM_RETENTION = 1
_STREAM_RECRUIT = 2
_STREAM_CHILD_TYPE = 3
_STREAM_THIN = 4


def _finalize(z: np.ndarray) -> np.ndarray:
    # uint64 wrapping is intended here
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _round_key(seed: int, stream: int, round_k: int) -> np.uint64:
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for part in (stream, round_k):
            z = _finalize((z + _GOLDEN) ^ np.uint64(part))
    return z


def keyed_uniforms(seed: int, stream: int, round_k: int, ids: np.ndarray) -> np.ndarray:
    """Uniform(0,1) per agent id, reproducible across schemes and rounds."""
    base = _round_key(seed, stream, round_k)
    with np.errstate(over="ignore"):
        h = _finalize(ids.astype(np.uint64) * _GOLDEN + base)
    return (h >> np.uint64(11)).astype(np.float64) * _U53


def _child_ids(parent_ids: np.ndarray, round_k: int, seed: int) -> np.ndarray:
    base = _round_key(seed, 7, round_k)
    with np.errstate(over="ignore"):
        return _finalize(parent_ids.astype(np.uint64) * _MIX1 + base)


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n_initial: int
    type_dist: ScalarDistribution
    value: float
    retention: RetentionModel
    scheme: PricingScheme
    retention_mode: str = "shared"
    growth_rate: float = 0.0
    seed: int = 0
    max_rounds: int = 5000
    revenue_eps: Optional[float] = None
    population_cap: Optional[int] = None

    def validate(self) -> "SimConfig":
        if self.n_initial < 1:
            raise ConfigInvalid("n_initial must be >= 1")
        if not (0.0 <= self.growth_rate < 1.0):
            raise ConfigInvalid("growth_rate must be in [0, 1)")
        if self.retention_mode not in ("shared", "independent"):
            raise ConfigInvalid(f"unknown retention_mode {self.retention_mode!r}")
        if self.value <= 0.0:
            raise ConfigInvalid("value must be positive")
        if self.max_rounds < 1:
            raise ConfigInvalid("max_rounds must be >= 1")
        eps = self.revenue_eps
        if eps is None:
            eps = 1e-9 * self.n_initial * self.value
        if eps <= 0.0:
            raise ConfigInvalid("revenue_eps must be positive")
        cap = self.population_cap
        if cap is None:
            cap = 2 * self.n_initial
        if cap < self.n_initial:
            raise ConfigInvalid("population_cap below initial population")
        return replace(self, revenue_eps=eps, population_cap=cap)


@dataclass
class SimResult:
    discounted_revenue: float
    rounds_run: int
    price_trajectory: list
    alive_trajectory: list
    buyer_trajectory: list
    seed_echo: int
    final_marginals: np.ndarray
    trace: Optional[list] = None


# -- engine --------------------------------------------------------------------


def empirical_marginal(gammas: np.ndarray, v: float) -> Empirical:
    """Empirical distribution of (1 - gamma) v over alive agents."""
    gammas = np.asarray(gammas, dtype=float)
    if gammas.size == 0:
        raise EmptyPopulation("no alive agents")
    return Empirical((1.0 - gammas) * v)


def _myerson_sorted(marg: np.ndarray) -> float:
    """Myerson posted price on a sorted empirical marginal: argmax of
    x_(i) * (n - i), ties toward the higher price."""
    n = marg.size
    # duplicates: the count of samples >= x must use the first occurrence
    first = np.searchsorted(marg, marg, side="left")
    revs = marg * (n - first)
    idx = n - 1 - int(np.argmax(revs[::-1]))
    return float(marg[idx])


def run(config: SimConfig, trace: bool = False) -> SimResult:
    cfg = config.validate()
    v = cfg.value
    beta = cfg.retention.beta
    seed = cfg.seed

    rng0 = np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, 0])
    gammas = cfg.type_dist.sample(rng0, cfg.n_initial)
    marg = (1.0 - gammas) * v
    order = np.argsort(marg, kind="stable")
    marg = marg[order]
    ids = np.arange(cfg.n_initial, dtype=np.uint64)[order]
    weight = 1.0

    q = retention_threshold_price(cfg.retention, v)
    scheme = cfg.scheme

    revenue = 0.0
    prices, alive_traj, buyers_traj = [], [], []
    trace_rows = [] if trace else None
    discount = 1.0
    k = 0
    while True:
        n_alive = marg.size
        if n_alive == 0 or k >= cfg.max_rounds:
            break
        if discount * weight * n_alive * v < cfg.revenue_eps:
            break

        # price and payments
        m_price = None
        if isinstance(scheme, KnownTypes):
            p_agent = np.minimum(marg, q)
            payments = float(p_agent.sum())
            buyers = n_alive
            p_round = q
            u = v - p_agent
        else:
            if isinstance(scheme, MyersonOnly):
                m_price = _myerson_sorted(marg)
                p_round = m_price
            elif isinstance(scheme, RetentionThresholdOnly):
                p_round = q
            elif isinstance(scheme, MyersonThreshold):
                m_price = _myerson_sorted(marg)
                p_round = min(q, scheme.scale * m_price)
            elif isinstance(scheme, FixedPrice):
                p_round = scheme.p
            else:
                raise ConfigInvalid(f"unknown scheme {scheme!r}")
            first_buyer = int(np.searchsorted(marg, p_round, side="left"))
            buyers = n_alive - first_buyer
            payments = p_round * buyers
            u = v - np.minimum(marg, p_round)

        revenue += discount * weight * payments
        prices.append(float(p_round))
        alive_traj.append(n_alive)
        buyers_traj.append(buyers)

        # retention
        if cfg.retention_mode == "shared":
            u_r = float(keyed_uniforms(seed, _STREAM_RETENTION, k, np.zeros(1, np.uint64))[0])
            r = float(cfg.retention.dist.quantile(u_r))
            survive = u >= r
        else:
            u_r = keyed_uniforms(seed, _STREAM_RETENTION, k, ids)
            r = np.asarray(cfg.retention.dist.quantile(u_r), dtype=float)
            survive = u >= r

        if trace:
            churned = ~survive
            trace_rows.append(
                {
                    "round": k,
                    "price": float(p_round),
                    "threshold": q,
                    "myerson": m_price,
                    "r_shared": r if cfg.retention_mode == "shared" else None,
                    "marg_max_survived": float(marg[survive].max()) if survive.any() else None,
                    "marg_min_churned": float(marg[churned].min()) if churned.any() else None,
                }
            )

        marg = marg[survive]
        ids = ids[survive]

        # viral growth: recruits join next round, untested this round
        if cfg.growth_rate > 0.0 and marg.size:
            recruiters = keyed_uniforms(seed, _STREAM_RECRUIT, k, ids) < cfg.growth_rate
            parents = ids[recruiters]
            if parents.size:
                u_t = keyed_uniforms(seed, _STREAM_CHILD_TYPE, k, parents)
                child_marg = (1.0 - np.asarray(cfg.type_dist.quantile(u_t), dtype=float)) * v
                kids = _child_ids(parents, k, seed)
                child_order = np.argsort(child_marg, kind="stable")
                child_marg = child_marg[child_order]
                kids = kids[child_order]
                pos = np.searchsorted(marg, child_marg)
                marg = np.insert(marg, pos, child_marg)
                ids = np.insert(ids, pos, kids)

        # population cap: uniform thinning keeps the estimator unbiased
        if marg.size > cfg.population_cap:
            keep = keyed_uniforms(seed, _STREAM_THIN, k, ids) < 0.5
            if keep.any():
                marg = marg[keep]
                ids = ids[keep]
                weight *= 2.0

        discount *= beta
        k += 1

    return SimResult(
        discounted_revenue=revenue / cfg.n_initial,
        rounds_run=k,
        price_trajectory=prices,
        alive_trajectory=alive_traj,
        buyer_trajectory=buyers_traj,
        seed_echo=seed,
        final_marginals=marg,
        trace=trace_rows,
    )


def run_pair(configs: list[SimConfig], trace: bool = False) -> list[SimResult]:
    """Run several configs that differ only in pricing scheme, sharing all
    random streams so revenues are paired."""
    if not configs:
        raise MismatchedConfigs("need at least one config")
    base = configs[0]
    for other in configs[1:]:
        for f in fields(SimConfig):
            if f.name == "scheme":
                continue
            if getattr(base, f.name) != getattr(other, f.name):
                raise MismatchedConfigs(f"configs differ in {f.name}")
    return [run(c, trace=trace) for c in configs]
