"""Grid studies over the repeated-pricing simulator.

Enumerates the configuration grid (type distribution x retention x discount
x growth x retention mode), runs paired simulations per pricing scheme with
common random numbers, and writes the ratio tables, summary fractions, and
histogram CSVs consumed by the figure renderer.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import multiprocessing
import statistics
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dists import Exponential, ImpatienceExponential, Lomax, ScalarDistribution, UniformUnit
from .repeat_pricing import (
    KnownTypes,
    MyersonOnly,
    MyersonThreshold,
    RetentionModel,
    RetentionThresholdOnly,
)
from .simulator import SimConfig, _round_key, run_pair

STUDY_MAX_ROUNDS = 600
SEEDS_PER_CELL = 5

# the scaling comparison uses a shorter horizon and more seed replicates:
# with shared retention draws a run's lifetime is dominated by a handful of
# whole-population wipeout events, so cell means need many replicates, and
# price-cut longevity gains compound without bound as the horizon grows
SCALING_MAX_ROUNDS = 50
SCALING_SEEDS_PER_CELL = 40


def _dist_label(d: ScalarDistribution) -> str:
    if isinstance(d, UniformUnit):
        return "uniform"
    if isinstance(d, ImpatienceExponential):
        return f"impexp{d.rate:g}"
    if isinstance(d, Exponential):
        return f"exp{d.rate:g}"
    if isinstance(d, Lomax):
        return f"lomax{d.alpha:g}"
    return type(d).__name__.lower()


@dataclass(frozen=True)
class GridSpec:
    type_dists: tuple = (
        ImpatienceExponential(1.0),
        ImpatienceExponential(2.0),
        ImpatienceExponential(3.0),
        UniformUnit(),
    )
    retention_dists: tuple = (
        Exponential(1.0),
        Exponential(3.0),
        Exponential(5.0),
        Lomax(3.0),
        Lomax(5.0),
    )
    betas: tuple = (0.97, 0.99, 0.999)
    growth_rates: tuple = (0.0, 0.01, 0.05)
    retention_modes: tuple = ("shared", "independent")
    scales: tuple = (1.0, 2.0 / 3.0, 0.5, 1.0 / 3.0)

    @staticmethod
    def excluded(type_dist, retention_dist) -> bool:
        # heavy-tailed retention paired with the middling exponential type
        # distribution is dropped from the grid
        return (
            isinstance(type_dist, ImpatienceExponential)
            and type_dist.rate == 2.0
            and isinstance(retention_dist, Lomax)
        )


def scaling_grid() -> GridSpec:
    """Subset used for the price-scaling study: uniform types, exponential
    retention, shared draws."""
    return GridSpec(
        type_dists=(UniformUnit(),),
        retention_dists=(Exponential(1.0), Exponential(3.0), Exponential(5.0)),
        retention_modes=("shared",),
    )


@dataclass(frozen=True)
class Cell:
    index: int
    type_dist: ScalarDistribution
    retention_dist: ScalarDistribution
    beta: float
    growth_rate: float
    retention_mode: str
    seed: int

    def labels(self) -> dict:
        return {
            "cell": self.index,
            "type_dist": _dist_label(self.type_dist),
            "retention": _dist_label(self.retention_dist),
            "beta": self.beta,
            "growth": self.growth_rate,
            "mode": self.retention_mode,
            "seed": self.seed,
        }


def _derive_seed(master_seed: int, *parts: int) -> int:
    z = master_seed
    for p in parts:
        z = int(_round_key(z, 101, p))
    return z & 0x7FFFFFFFFFFFFFFF


def enumerate_grid(spec: GridSpec, master_seed: int) -> list[Cell]:
    """Full cross product minus exclusions, in deterministic order, with
    per-cell seeds derived from the master seed."""
    cells = []
    idx = 0
    for td in spec.type_dists:
        for rd in spec.retention_dists:
            if GridSpec.excluded(td, rd):
                continue
            for beta in spec.betas:
                for g in spec.growth_rates:
                    for mode in spec.retention_modes:
                        cells.append(
                            Cell(idx, td, rd, beta, g, mode, _derive_seed(master_seed, idx))
                        )
                        idx += 1
    return cells


@dataclass
class StudySummary:
    frac_mt_within_1pct: float
    frac_mt_strictly_best: float
    frac_threshold_beats_myerson: float
    n_cells: int
    min_guarantee_margin: float
    ratios: list = field(default_factory=list)


_SCHEMES = (
    ("known", KnownTypes()),
    ("mt", MyersonThreshold()),
    ("myerson", MyersonOnly()),
    ("threshold", RetentionThresholdOnly()),
)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _run_cell(
    cell: Cell,
    schemes,
    n: int,
    max_rounds: int,
    seeds_per_cell: int,
) -> tuple[dict, list, Optional[str]]:
    """Paired revenues per scheme, averaged over seed replicates.

    Returns (mean revenue per scheme label, per-replicate rows, error)."""
    rm = RetentionModel(cell.retention_dist, cell.beta)
    revs = {label: [] for label, _ in schemes}
    run_rows = []
    try:
        for rep in range(seeds_per_cell):
            seed = _derive_seed(cell.seed, rep)
            configs = [
                SimConfig(
                    n_initial=n,
                    type_dist=cell.type_dist,
                    value=1.0,
                    retention=rm,
                    scheme=scheme,
                    retention_mode=cell.retention_mode,
                    growth_rate=cell.growth_rate,
                    seed=seed,
                    max_rounds=max_rounds,
                )
                for _, scheme in schemes
            ]
            results = run_pair(configs)
            for (label, _), res in zip(schemes, results):
                revs[label].append(res.discounted_revenue)
                alive_frac = (
                    res.alive_trajectory[-1] / n if res.alive_trajectory else 0.0
                )
                run_rows.append(
                    (cell.index, rep, label, res.discounted_revenue, res.rounds_run, alive_frac)
                )
    except Exception as exc:  # per-cell failures are recorded, not fatal
        return revs, run_rows, f"{type(exc).__name__}: {exc}"
    return revs, run_rows, None


def _map_cells(fn, cells, n_jobs: int):
    """Apply fn to each cell, in order, optionally across worker processes.
    Per-cell seeding keeps results independent of the worker count."""
    if n_jobs <= 1:
        return [fn(c) for c in cells]
    with multiprocessing.Pool(n_jobs) as pool:
        return pool.map(fn, cells, chunksize=1)


def run_study(
    out_dir: str | Path,
    spec: Optional[GridSpec] = None,
    n: int = 100_000,
    master_seed: int = 0,
    seeds_per_cell: int = SEEDS_PER_CELL,
    max_rounds: int = STUDY_MAX_ROUNDS,
    mode_filter: Optional[str] = None,
    study_name: str = "main",
    n_jobs: int = 1,
) -> StudySummary:
    """The main grid study: MT against its two single-rule components plus
    the known-types benchmark, one ratio per cell."""
    spec = spec or GridSpec()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = enumerate_grid(spec, master_seed)
    if mode_filter is not None:
        cells = [c for c in cells if c.retention_mode == mode_filter]

    t0 = time.time()
    worker = functools.partial(
        _run_cell, schemes=_SCHEMES, n=n, max_rounds=max_rounds, seeds_per_cell=seeds_per_cell
    )
    cell_results = _map_cells(worker, cells, n_jobs)
    ratio_rows, run_rows, ratios = [], [], []
    n_within = n_best = n_thr = 0
    guarantee_min = math.inf
    for cell, (revs, cell_runs, err) in zip(cells, cell_results):
        run_rows.extend(cell_runs)
        labels = cell.labels()
        if err is not None:
            ratio_rows.append(list(labels.values()) + [math.nan] * 8 + [err])
            continue
        mt = np.asarray(revs["mt"])
        best_alt = np.maximum(np.asarray(revs["myerson"]), np.asarray(revs["threshold"]))
        per_rep = mt / best_alt
        ratio = float(per_rep.mean())
        se = float(per_rep.std(ddof=1) / math.sqrt(len(per_rep))) if len(per_rep) > 1 else 0.0
        known = float(np.mean(revs["known"]))
        guarantee = float(mt.mean()) - (1.0 / math.e) * known * 0.99
        guarantee_min = min(guarantee_min, guarantee)
        within = ratio >= 0.99
        strictly = ratio > 1.0 + 2.0 * se
        thr_beats = float(np.mean(revs["threshold"])) > float(np.mean(revs["myerson"]))
        n_within += within
        n_best += strictly
        n_thr += thr_beats
        ratios.append((cell, ratio))
        ratio_rows.append(
            list(labels.values())
            + [
                known,
                float(mt.mean()),
                float(np.mean(revs["myerson"])),
                float(np.mean(revs["threshold"])),
                ratio,
                se,
                within,
                strictly,
                thr_beats,
                "",
            ]
        )

    n_ok = len(ratios)
    summary = StudySummary(
        frac_mt_within_1pct=n_within / n_ok if n_ok else math.nan,
        frac_mt_strictly_best=n_best / n_ok if n_ok else math.nan,
        frac_threshold_beats_myerson=n_thr / n_ok if n_ok else math.nan,
        n_cells=n_ok,
        min_guarantee_margin=guarantee_min,
        ratios=[r for _, r in ratios],
    )

    axis_cols = ["cell", "type_dist", "retention", "beta", "growth", "mode", "seed"]
    _write_csv(
        out / "ratios.csv",
        axis_cols
        + [
            "rev_known",
            "rev_mt",
            "rev_myerson",
            "rev_threshold",
            "ratio",
            "ratio_se",
            "within_1pct",
            "strictly_best",
            "threshold_beats_myerson",
            "error",
        ],
        ratio_rows,
    )
    _write_csv(
        out / "runs.csv",
        ["cell", "replicate", "scheme", "revenue", "rounds", "final_alive_frac"],
        run_rows,
    )
    _write_csv(
        out / "summary.csv",
        [
            "frac_mt_within_1pct",
            "frac_mt_strictly_best",
            "frac_threshold_beats_myerson",
            "n_cells",
            "min_guarantee_margin",
        ],
        [
            (
                summary.frac_mt_within_1pct,
                summary.frac_mt_strictly_best,
                summary.frac_threshold_beats_myerson,
                summary.n_cells,
                summary.min_guarantee_margin,
            )
        ],
    )
    _write_csv(
        out / "hist_mt_vs_best.csv",
        ["cell", "ratio"],
        [(c.index, r) for c, r in ratios],
    )
    _write_csv(
        out / "hist_indep.csv",
        ["cell", "ratio"],
        [(c.index, r) for c, r in ratios if c.retention_mode == "independent"],
    )
    _write_manifest(
        out,
        study_name,
        master_seed,
        n,
        len(cells),
        seeds_per_cell,
        max_rounds,
        time.time() - t0,
    )
    return summary


def scaling_study(
    out_dir: str | Path,
    n: int = 100_000,
    master_seed: int = 0,
    seeds_per_cell: int = SCALING_SEEDS_PER_CELL,
    max_rounds: int = SCALING_MAX_ROUNDS,
    scales: Optional[Sequence[float]] = None,
    n_jobs: int = 1,
) -> dict:
    """Scaled-MT against plain MT on the exponential-retention subset;
    returns per-scale median ratios (cell mean revenue under the scaled
    price over cell mean revenue under plain MT)."""
    spec = scaling_grid()
    scales = tuple(scales if scales is not None else spec.scales)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = enumerate_grid(spec, master_seed)

    t0 = time.time()
    schemes = [("mt", MyersonThreshold())] + [
        (f"scaled_{c:g}", MyersonThreshold(scale=c)) for c in scales
    ]
    worker = functools.partial(
        _run_cell, schemes=schemes, n=n, max_rounds=max_rounds, seeds_per_cell=seeds_per_cell
    )
    cell_results = _map_cells(worker, cells, n_jobs)
    hist_rows, ratio_rows, run_rows = [], [], []
    per_scale: dict[float, list] = {c: [] for c in scales}
    for cell, (revs, cell_runs, err) in zip(cells, cell_results):
        run_rows.extend(cell_runs)
        labels = cell.labels()
        if err is not None:
            ratio_rows.append(list(labels.values()) + [math.nan, math.nan, err])
            continue
        # ratio of cell means, not the mean of per-replicate ratios: the
        # latter is dominated by replicates where the MT run happens to die
        # early, which inflates low scales
        mt_mean = float(np.mean(revs["mt"]))
        for c in scales:
            ratio = float(np.mean(revs[f"scaled_{c:g}"])) / mt_mean
            per_scale[c].append(ratio)
            hist_rows.append((cell.index, c, ratio))
            ratio_rows.append(list(labels.values()) + [c, ratio, ""])

    medians = {c: statistics.median(v) for c, v in per_scale.items() if v}
    axis_cols = ["cell", "type_dist", "retention", "beta", "growth", "mode", "seed"]
    _write_csv(out / "ratios.csv", axis_cols + ["scale", "ratio", "error"], ratio_rows)
    _write_csv(
        out / "runs.csv",
        ["cell", "replicate", "scheme", "revenue", "rounds", "final_alive_frac"],
        run_rows,
    )
    _write_csv(out / "hist_scaled.csv", ["cell", "scale", "ratio"], hist_rows)
    _write_csv(
        out / "summary.csv",
        ["scale", "median_ratio", "min_ratio", "n_cells"],
        [
            (c, medians[c], min(per_scale[c]), len(per_scale[c]))
            for c in scales
            if per_scale[c]
        ],
    )
    _write_manifest(
        out, "scaling", master_seed, n, len(cells), seeds_per_cell, max_rounds, time.time() - t0
    )
    return medians


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).parent,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(
    out: Path,
    study: str,
    master_seed: int,
    n: int,
    n_cells: int,
    seeds_per_cell: int,
    max_rounds: int,
    elapsed_s: float,
) -> None:
    manifest = {
        "study": study,
        "git_hash": _git_hash(),
        "master_seed": master_seed,
        "n": n,
        "n_cells": n_cells,
        "seeds_per_cell": seeds_per_cell,
        "max_rounds": max_rounds,
        "elapsed_seconds": round(elapsed_s, 3),
        "finished_unix": int(time.time()),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
