"""Render figures from skipprice study CSVs.

Three figure kinds cover the whole output layout: curves with marked optimal
prices, per-group density panels, and performance-ratio histograms with
0.01-wide bins aligned to the 1% threshold. `render_figures <out_dir>` maps
every study CSV to one `fig_*.png` next to it.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

BIN_WIDTH = 0.01

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


class MissingColumn(Exception):
    """A referenced CSV column does not exist."""

    def __init__(self, column: str, path):
        self.column = column
        super().__init__(f"missing column {column!r} in {path}")


@dataclass
class FigureSpec:
    csv_paths: list
    kind: str  # curve_with_markers | density_panel | ratio_histogram
    output: Path
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    columns: dict = field(default_factory=dict)


def _read_table(path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        cols: dict[str, list[str]] = {n: [] for n in names}
        for row in reader:
            for n in names:
                cols[n].append(row[n])
    return cols


def _numeric(table: dict, name: str, path) -> np.ndarray:
    if name not in table:
        raise MissingColumn(name, path)
    vals = []
    for s in table[name]:
        try:
            vals.append(float(s))
        except (TypeError, ValueError):
            vals.append(math.nan)
    return np.asarray(vals, dtype=float)


def ratio_mass_at_least(ratios: Sequence[float], threshold: float = 0.99) -> float:
    """Fraction of raw ratios at or above the threshold. The histogram bins
    are aligned to the same edges, so this equals the plotted mass."""
    arr = np.asarray([r for r in ratios if math.isfinite(r)], dtype=float)
    if arr.size == 0:
        return math.nan
    return float(np.mean(arr >= threshold))


def _bin_edges(values: np.ndarray) -> np.ndarray:
    lo = math.floor(values.min() / BIN_WIDTH) * BIN_WIDTH
    hi = math.ceil(values.max() / BIN_WIDTH) * BIN_WIDTH
    if hi <= lo:
        hi = lo + BIN_WIDTH
    n = int(round((hi - lo) / BIN_WIDTH))
    return lo + BIN_WIDTH * np.arange(n + 1)


def _render_ratio_histogram(spec: FigureSpec, ax) -> None:
    col = spec.columns.get("ratio", "ratio")
    group = spec.columns.get("group")
    for path in spec.csv_paths:
        table = _read_table(path)
        ratios = _numeric(table, col, path)
        ratios = ratios[np.isfinite(ratios)]
        if ratios.size == 0:
            continue  # empty CSV: leave the axes empty
        if group and group in table:
            keys = np.asarray(table[group])
            for key in sorted(set(keys)):
                sub = ratios[keys == key]
                if sub.size:
                    ax.hist(sub, bins=_bin_edges(sub), alpha=0.55,
                            label=f"{group}={key}")
            ax.legend()
        else:
            ax.hist(ratios, bins=_bin_edges(ratios), color="#3465a4")
            frac = ratio_mass_at_least(ratios)
            ax.axvline(0.99, color="crimson", lw=1)
            ax.set_title(spec.title or f"mass at ratio >= 0.99: {frac:.4f}")


def _render_curve_with_markers(spec: FigureSpec, ax) -> None:
    x_col = spec.columns.get("x", "p")
    y_cols = spec.columns.get("y", ("utility", "revenue", "v"))
    for path in spec.csv_paths:
        table = _read_table(path)
        xs = _numeric(table, x_col, path)
        for y_col in y_cols:
            if y_col not in table:
                continue
            ys = _numeric(table, y_col, path)
            ok = np.isfinite(xs) & np.isfinite(ys)
            if not ok.any():
                continue
            (line,) = ax.plot(xs[ok], ys[ok], label=y_col)
            # visual convention: triangle at the utility optimum,
            # circle at the revenue optimum
            if y_col == "utility":
                i = int(np.nanargmax(np.where(ok, ys, -np.inf)))
                ax.plot(xs[i], ys[i], "^", ms=9, color=line.get_color())
            elif y_col == "revenue":
                i = int(np.nanargmax(np.where(ok, ys, -np.inf)))
                ax.plot(xs[i], ys[i], "o", ms=8, mfc="none", color=line.get_color())
    ax.legend()


def _render_sweep(spec: FigureSpec, ax) -> None:
    # optimal prices across a parameter sweep: triangles for the utility
    # price, circles for the revenue price
    for path in spec.csv_paths:
        table = _read_table(path)
        p_util = _numeric(table, "p_util", path)
        p_rev = _numeric(table, "p_rev", path)
        lam = _numeric(table, "lambda", path) if "lambda" in table else None
        xs = lam if lam is not None and np.isfinite(lam).any() else np.arange(p_util.size, dtype=float)
        ax.plot(xs, p_util, "^-", label="p_util")
        ax.plot(xs, p_rev, "o--", mfc="none", label="p_rev")
    ax.legend()


def _render_density_panel(spec: FigureSpec, ax) -> None:
    value_col = spec.columns.get("value", "revenue")
    group = spec.columns.get("group", "scheme")
    for path in spec.csv_paths:
        table = _read_table(path)
        if value_col not in table:
            # generic fallback: bar chart of every numeric column
            names, heights = [], []
            for name in table:
                vals = _numeric(table, name, path)
                if np.isfinite(vals).any():
                    names.append(name)
                    heights.append(float(np.nanmean(vals)))
            ax.bar(range(len(names)), heights)
            ax.set_xticks(range(len(names)))
            ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
            continue
        vals = _numeric(table, value_col, path)
        if group in table:
            keys = np.asarray(table[group])
            for key in sorted(set(keys)):
                sub = vals[keys == key]
                sub = sub[np.isfinite(sub)]
                if sub.size:
                    ax.hist(sub, bins=40, alpha=0.5, density=True, label=str(key))
            ax.legend(fontsize=8)
        else:
            ax.hist(vals[np.isfinite(vals)], bins=40, density=True)


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "ratio_histogram":
                _render_ratio_histogram(spec, ax)
            elif spec.kind == "curve_with_markers":
                if spec.columns.get("sweep"):
                    _render_sweep(spec, ax)
                else:
                    _render_curve_with_markers(spec, ax)
            elif spec.kind == "density_panel":
                _render_density_panel(spec, ax)
            else:
                raise ValueError(f"unknown figure kind {spec.kind!r}")
            if spec.xlabel:
                ax.set_xlabel(spec.xlabel)
            if spec.ylabel:
                ax.set_ylabel(spec.ylabel)
            if spec.title and not ax.get_title():
                ax.set_title(spec.title)
            spec.output.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(spec.output)
        finally:
            plt.close(fig)
    return spec.output


def _spec_for_csv(path: Path) -> Optional[FigureSpec]:
    name = path.name
    out = path.parent / f"fig_{path.stem}.png"
    if name.startswith("hist_") or name == "ratios.csv":
        cols = {"ratio": "ratio"}
        if name == "hist_scaled.csv":
            cols["group"] = "scale"
        return FigureSpec([path], "ratio_histogram", out,
                          xlabel="revenue ratio", ylabel="cells", columns=cols)
    if name == "runs.csv":
        return FigureSpec([path], "density_panel", out,
                          xlabel="per-capita revenue", ylabel="density",
                          columns={"value": "revenue", "group": "scheme"})
    if name == "summary.csv":
        return FigureSpec([path], "density_panel", out, title="study summary",
                          columns={"value": "__none__"})
    if name == "sweep.csv":
        return FigureSpec([path], "curve_with_markers", out,
                          xlabel="lambda", ylabel="price",
                          columns={"sweep": True})
    if name.startswith("curve_"):
        return FigureSpec([path], "curve_with_markers", out,
                          xlabel="price", ylabel="value / utility / revenue")
    if name.endswith(".csv"):
        return FigureSpec([path], "density_panel", out, columns={"value": "__none__"})
    return None


def render_figures(out_dir) -> list:
    """Render one figure per study CSV under out_dir; returns output paths."""
    root = Path(out_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    written = []
    for path in sorted(root.rglob("*.csv")):
        spec = _spec_for_csv(path)
        if spec is not None:
            written.append(render(spec))
    return written


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1 or argv[0] in ("-h", "--help"):
        print("usage: render_figures <out_dir>", file=sys.stderr)
        return 0 if argv and argv[0] in ("-h", "--help") else 2
    try:
        written = render_figures(argv[0])
    except MissingColumn as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
