"""Command-line entry point.

Subcommands: `single` (one-shot price optimization and condition checks),
`simulate` (one simulator run with trajectory CSV), `study` (grid studies),
and `figures` (hand off to the optional figure renderer). Exit codes: 0 on
success, 2 on configuration errors, 3 on runtime failures.

Config files are JSON with tagged unions: every distribution, value function,
and pricing scheme is an object with a `kind` field.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import subprocess
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .dists import (
    DistError,
    Empirical,
    EqualRevenue,
    Exponential,
    FlattenedTailImpatienceExponential,
    ImpatienceExponential,
    Lomax,
    ScalarDistribution,
    TwoPointDiscrete,
    UniformUnit,
    truncate,
)
from .repeat_pricing import (
    FixedPrice,
    KnownTypes,
    MyersonOnly,
    MyersonThreshold,
    PricingScheme,
    RetentionModel,
    RetentionThresholdOnly,
)
from .valuefn import Insensitive, PriceSensitivePoly, ValueFnError, ValueFunction, clinear_build

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit code 2."""


# -- tagged-union parsing --------------------------------------------------------


def _require(obj: dict, field: str, where: str):
    if field not in obj:
        raise ConfigError(f"{where}: missing field {field!r}")
    return obj[field]


def parse_dist(obj, where: str = "dist") -> ScalarDistribution:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with a 'kind' field")
    kind = _require(obj, "kind", where)
    try:
        if kind == "uniform":
            return UniformUnit()
        if kind == "exponential":
            return Exponential(float(_require(obj, "rate", where)))
        if kind == "lomax":
            return Lomax(float(_require(obj, "alpha", where)))
        if kind == "equal_revenue":
            return EqualRevenue()
        if kind == "impatience_exponential":
            return ImpatienceExponential(float(_require(obj, "rate", where)))
        if kind == "flattened_tail":
            return FlattenedTailImpatienceExponential(
                float(_require(obj, "rate", where)), float(_require(obj, "tau", where))
            )
        if kind == "two_point":
            return TwoPointDiscrete(
                tuple(_require(obj, "values", where)),
                tuple(_require(obj, "probabilities", where)),
            )
        if kind == "empirical":
            return Empirical(list(_require(obj, "samples", where)))
        if kind == "truncated":
            return truncate(
                parse_dist(_require(obj, "base", where), f"{where}.base"),
                float(_require(obj, "lo", where)),
                float(_require(obj, "hi", where)),
            )
    except (TypeError, ValueError, DistError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown distribution kind {kind!r}")


def parse_value_fn(obj, where: str = "value_fn") -> ValueFunction:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with a 'kind' field")
    kind = _require(obj, "kind", where)
    try:
        if kind == "poly":
            return PriceSensitivePoly(
                k=float(_require(obj, "k", where)),
                p_bar=float(obj.get("p_bar", 1.0)),
            )
        if kind == "clinear":
            return clinear_build(
                float(obj.get("c", 1.0)),
                parse_dist(_require(obj, "type_dist", where), f"{where}.type_dist"),
                grid_n=int(obj.get("grid_n", 2000)),
            )
        if kind == "insensitive":
            return Insensitive(
                level=float(_require(obj, "level", where)),
                threshold=float(obj.get("threshold", 0.0)),
            )
    except (TypeError, ValueError, ValueFnError, DistError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown value function kind {kind!r}")


def parse_scheme(obj, where: str = "scheme") -> PricingScheme:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with a 'kind' field")
    kind = str(_require(obj, "kind", where)).replace("-", "_")
    try:
        if kind == "known_types":
            return KnownTypes()
        if kind == "myerson":
            return MyersonOnly()
        if kind == "threshold":
            return RetentionThresholdOnly()
        if kind == "mt":
            return MyersonThreshold(scale=float(obj.get("scale", 1.0)))
        if kind == "fixed":
            return FixedPrice(float(_require(obj, "p", where)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown scheme kind {kind!r}")


def load_config(path: str) -> tuple[dict, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not raw.strip():
        raise ConfigError(f"{path}: empty config")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return obj, raw


# -- manifest --------------------------------------------------------------------


@dataclass
class RunManifest:
    command: list
    config_sha256: str
    master_seed: int
    code_version: str
    started: str
    finished: str
    outputs: list


def _code_version() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
        ).stdout.strip()
    except OSError:
        rev = ""
    return f"{__version__}+{rev}" if rev else __version__


def _iso(t: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def write_manifest(out: Path, config_bytes: bytes, seed: int, started: float) -> None:
    outputs = sorted(
        str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "run_manifest.json"
    )
    m = RunManifest(
        command=sys.argv,
        config_sha256=hashlib.sha256(config_bytes).hexdigest(),
        master_seed=seed,
        code_version=_code_version(),
        started=_iso(started),
        finished=_iso(time.time()),
        outputs=outputs,
    )
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(asdict(m), fh, indent=2)
        fh.write("\n")


# -- subcommands -----------------------------------------------------------------


def cmd_single(args) -> int:
    from . import single_task

    cfg, raw = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()

    if "family" in cfg:
        name = cfg["family"]
        if name not in single_task.FAMILIES:
            raise ConfigError(f"unknown family {name!r}")
        entries = single_task.FAMILIES[name]()
    else:
        td = parse_dist(_require(cfg, "type_dist", "config"), "type_dist")
        vf = parse_value_fn(_require(cfg, "value_fn", "config"), "value_fn")
        entries = [single_task.SweepEntry("single", None, None, td, vf)]

    rows = single_task.figure_sweep(entries, out, grid_n=int(cfg.get("grid_n", 10_000)))

    cols = ("param", "lambda", "tau", "p_util", "p_rev", "u_at_putil", "rev_at_prev")
    widths = {c: max(len(c), 12) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(single_task._fmt(r[c]).ljust(widths[c]) for c in cols))

    payload = {"rows": rows}
    if args.objective is not None and len(entries) == 1:
        key = "p_util" if args.objective == "utility" else "p_rev"
        payload["objective"] = args.objective
        payload["objective_price"] = rows[0][key]
    print(json.dumps(payload, default=str))
    write_manifest(out, raw, args.seed, started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulator import ConfigInvalid, SimConfig, run

    cfg, raw = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()

    n = args.n if args.n is not None else int(cfg.get("n", 10_000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    ret = _require(cfg, "retention", "config")
    sim_cfg = SimConfig(
        n_initial=n,
        type_dist=parse_dist(_require(cfg, "type_dist", "config"), "type_dist"),
        value=float(cfg.get("value", 1.0)),
        retention=RetentionModel(
            parse_dist(_require(ret, "dist", "retention"), "retention.dist"),
            float(ret.get("beta", 1.0)),
        ),
        scheme=parse_scheme(_require(cfg, "scheme", "config"), "scheme"),
        retention_mode=str(cfg.get("mode", "shared")),
        growth_rate=float(cfg.get("growth", 0.0)),
        seed=seed,
        max_rounds=int(cfg.get("max_rounds", 5000)),
    )
    try:
        sim_cfg = sim_cfg.validate()
    except (ConfigInvalid, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    res = run(sim_cfg)
    with open(out / "trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "price", "alive", "buyers"])
        for k, (p, a, b) in enumerate(
            zip(res.price_trajectory, res.alive_trajectory, res.buyer_trajectory)
        ):
            w.writerow([k, f"{p:.12g}", a, b])
    print(f"discounted per-capita revenue: {res.discounted_revenue:.10g}")
    print(f"rounds: {res.rounds_run}")
    write_manifest(out, raw, seed, started)
    return EXIT_OK


def cmd_study(args) -> int:
    from .experiments import run_study, scaling_study

    out = Path(args.out)
    started = time.time()
    n = args.n if args.n is not None else 100_000
    seed = args.seed if args.seed is not None else 0
    params = json.dumps(
        {"study": args.study, "n": n, "seed": seed}, sort_keys=True
    ).encode()

    if args.study == "main":
        s = run_study(out, n=n, master_seed=seed, n_jobs=args.threads)
    elif args.study == "independent":
        s = run_study(
            out, n=n, master_seed=seed, n_jobs=args.threads,
            mode_filter="independent", study_name="independent",
        )
    elif args.study == "scaling":
        medians = scaling_study(out, n=n, master_seed=seed, n_jobs=args.threads)
        for c in sorted(medians, reverse=True):
            print(f"scale {c:.6g}: median ratio {medians[c]:.6g}")
        write_manifest(out, params, seed, started)
        return EXIT_OK
    else:
        raise ConfigError(f"unknown study {args.study!r}")

    print(f"cells: {s.n_cells}")
    print(f"frac_mt_within_1pct: {s.frac_mt_within_1pct:.6g}")
    print(f"frac_mt_strictly_best: {s.frac_mt_strictly_best:.6g}")
    print(f"frac_threshold_beats_myerson: {s.frac_threshold_beats_myerson:.6g}")
    write_manifest(out, params, seed, started)
    return EXIT_OK


def cmd_figures(args) -> int:
    try:
        from plotkit import render_figures
    except ImportError:
        print("figure rendering requires the optional plotkit package", file=sys.stderr)
        return EXIT_RUNTIME
    render_figures(args.out)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="skipprice",
        description="Skip pricing: one-shot optimization, market simulation, grid studies.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("single", help="optimize prices for one instance or a named family")
    p.add_argument("--config", required=True, help="JSON config (instance or {\"family\": ...})")
    p.add_argument("--out", required=True, help="output directory for CSVs")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    p.add_argument("--objective", choices=("utility", "revenue"),
                   help="also report the optimal price for this objective alone")
    p.set_defaults(func=cmd_single)

    p = sub.add_parser("simulate", help="run the market simulator once")
    p.add_argument("--config", required=True, help="JSON simulation config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--n", type=int, help="override the initial population size")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a full experiment grid")
    p.add_argument("--study", required=True, help="main, scaling, or independent")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--n", type=int, help="agents per cell (default 100000)")
    p.add_argument("--threads", type=int, default=1, help="worker process cap")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("figures", help="render figures from a study directory")
    p.add_argument("--out", required=True, help="study output directory to read")
    p.set_defaults(func=cmd_figures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
