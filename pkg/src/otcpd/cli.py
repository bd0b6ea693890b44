"""Command-line interface: ``otcpd {generate,detect,evaluate,sweep,null}``.

Every command writes ``config.json`` into its output directory.  Passing
that file back with ``--config`` re-runs the command with identical
settings; flags given on the command line override the stored values.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 solver non-convergence (only with ``--strict``).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import ordered_map
from .cpd import StatSeries, peak_search, sliding_statistic
from .data import (
    DataError,
    Gaussian,
    Laplace,
    TimeSeries,
    generate_synthetic,
    load_csv,
    load_labels,
    benchmark_spec,
    save_csv,
    save_labels,
    spec_from_dict,
)
from .gof import KINDS, GofStatistic, null_calibration
from .metrics import auc_pr, report_record, threshold_sweep
from .plot import plot_null_svg, plot_svg

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 2, 3, 4

# Window, margin, separation and epsilon used for each evaluation setting.
PRESETS = {
    "paper-synthetic": {"window": 50, "xi": 20, "delta": 50, "epsilon": 0.1},
    "hasc": {"window": 500, "xi": 200, "delta": 250, "epsilon": 0.1},
    "beedance": {"window": 20, "xi": 10, "delta": 10, "epsilon": 1.0},
    "salinas": {"window": 10, "xi": 2, "delta": 2, "epsilon": 1.0},
    "ecg": {"window": 50, "xi": 20, "delta": 25, "epsilon": 0.1},
}

SWEEP_WINDOWS = (25, 50, 100, 200)
SWEEP_METHODS = ("re", "sre:0.1", "sre:1", "ed", "mmd", "w1", "sinkdiv:1")
NULL_SETTINGS = ("cauchy", "gaussian", "gaussian-diag", "laplace")

# Keys that only steer where output goes; they are not part of a replayable setting.
_NOT_ECHOED = {"config", "output_dir", "func"}


class UsageError(Exception):
    pass


class NonConvergence(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _save_series(zs: StatSeries, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "z"])
        for t, z in zip(zs.t, zs.z):
            w.writerow([int(t), f"{z:.17g}"])


def _load_series(path) -> StatSeries:
    ts = load_csv(path)
    if ts.d != 2:
        raise DataError(f"{path}: expected two columns (t, z), found {ts.d}")
    t = ts.values[:, 0]
    if np.any(t != np.round(t)) or np.any(np.diff(t) <= 0):
        raise DataError(f"{path}: column t must hold increasing integers")
    return StatSeries(t.astype(int), ts.values[:, 1])


def _echo(args: argparse.Namespace, out: Path, **extra) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_ECHOED}
    cfg.update(extra)
    cfg["version"] = __version__
    _write_json(out / "config.json", cfg)


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("OTCPD_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"OTCPD_SEED must be an integer, got {env!r}") from None


def _resolve(args, key):
    """Explicit flag, else the preset's value, else None."""
    value = getattr(args, key, None)
    if value is None and getattr(args, "preset", None):
        value = PRESETS[args.preset].get(key)
    return value


def _require(args, *keys) -> dict:
    vals = {}
    for k in keys:
        v = _resolve(args, k)
        if v is None:
            raise UsageError(f"--{k.replace('_', '-')} is required (or choose a --preset)")
        vals[k] = v
    return vals


def _stat(kind: str, epsilon, seed: int) -> GofStatistic:
    eps = epsilon if kind in ("sre", "sinkdiv") else None
    try:
        return GofStatistic(kind, epsilon=eps, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_input(args) -> TimeSeries:
    if args.input is None:
        raise UsageError("--input is required")
    return load_csv(args.input, label_path=args.labels)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    seed = _seed(args)
    if args.spec:
        try:
            obj = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read segment spec {args.spec}: {exc}") from None
        spec = spec_from_dict(obj, seed)
    else:
        spec = benchmark_spec(d=args.dim, seed=seed)
    series = generate_synthetic(spec, name=args.preset or "custom")
    out = _out_dir(args)
    save_csv(series, out / "series.csv", out / "labels.txt")
    _echo(args, out, seed=seed, spec=spec.describe())
    print(f"wrote {out / 'series.csv'} (T={series.T}, d={series.d}, {len(series.truth)} change points)")
    return EXIT_OK


def cmd_detect(args) -> int:
    seed = _seed(args)
    p = _require(args, "window", "delta")
    epsilon = _resolve(args, "epsilon")
    stat = _stat(args.stat, epsilon, seed)
    series = _read_input(args)
    n = p["window"]
    if series.T < 2 * n:
        raise DataError(f"series has T={series.T} rows; window n={n} needs at least {2 * n}")
    zs = sliding_statistic(series, n, stat, args.stride, args.workers)

    eta = args.eta
    extra = {}
    if eta is None:
        if not len(series.truth):
            raise UsageError("--eta is required when no --labels are given")
        xi = _require(args, "xi")["xi"]
        sw = threshold_sweep(zs, series.truth, xi, p["delta"])
        i = int(np.argmax(sw.f1))
        eta = float(sw.eta[i])
        extra = {"eta_from_best_f1": eta, "best_f1": float(sw.f1[i])}
    cps = peak_search(zs, eta, p["delta"])

    out = _out_dir(args)
    _save_series(zs, out / "zseries.csv")
    save_labels(cps.indices, out / "predictions.txt")
    plot_svg(zs, cps, series.truth, eta, out / "plot.svg", title=f"{stat.label}, n={n}")
    _echo(args, out, seed=seed, resolved={**p, "epsilon": stat.epsilon, "eta": eta},
          stat_config=stat.to_dict(), unconverged=zs.unconverged, **extra)
    print(f"{len(cps)} change points at eta={eta:.6g}: {cps.indices.tolist()}")
    if zs.unconverged:
        msg = f"{zs.unconverged} windows hit the Sinkhorn iteration limit"
        if args.strict:
            raise NonConvergence(msg)
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK


def _evaluate(zs: StatSeries, truth, xi: int, delta: int) -> dict:
    sw = threshold_sweep(zs, truth, xi, delta)
    i = int(np.argmax(sw.f1))
    curve = auc_pr(zs, truth, xi, delta)
    return {
        "auc_pr": curve.auc,
        "best_f1": float(sw.f1[i]),
        "best_eta": float(sw.eta[i]),
        "tp": int(sw.tp[i]),
        "fp": int(sw.fp[i]),
        "fn": int(sw.fn[i]),
    }


def cmd_evaluate(args) -> int:
    p = _require(args, "xi", "delta")
    if args.input is None:
        raise UsageError("--input (a z-series CSV written by detect) is required")
    if args.labels is None:
        raise UsageError("--labels is required to score a z-series")
    zs = _load_series(args.input)
    truth = load_labels(args.labels)
    res = _evaluate(zs, truth, p["xi"], p["delta"])
    out = _out_dir(args)
    dataset = Path(args.input).stem
    rows = [
        report_record(dataset, args.method, args.window or 0, args.epsilon, k, v, _seed(args))
        for k, v in res.items()
    ]
    _write_jsonl(out / "report.jsonl", rows)
    _echo(args, out, resolved=p)
    print(json.dumps(res, sort_keys=True))
    return EXIT_OK


def _parse_method(text: str) -> tuple[str, float | None]:
    kind, _, eps = text.partition(":")
    if kind not in KINDS:
        raise UsageError(f"unknown method {kind!r} in --methods")
    if kind in ("sre", "sinkdiv"):
        if not eps:
            raise UsageError(f"method {kind} needs an epsilon, e.g. {kind}:0.1")
        try:
            return kind, float(eps)
        except ValueError:
            raise UsageError(f"bad epsilon in method {text!r}") from None
    if eps:
        raise UsageError(f"method {kind} takes no epsilon")
    return kind, None


def _sweep_instance(seed: int, cells, xi: int, series: TimeSeries | None, dataset: str):
    ts = series if series is not None else generate_synthetic(benchmark_spec(seed=seed))
    rows, unconverged = [], 0
    for kind, eps, n in cells:
        stat = GofStatistic(kind, epsilon=eps, seed=seed)
        zs = sliding_statistic(ts, n, stat)
        unconverged += zs.unconverged
        res = _evaluate(zs, ts.truth, xi, n)
        method = stat.label
        rows.append(report_record(dataset, method, n, eps, "auc_pr", res["auc_pr"], seed))
        rows.append(report_record(dataset, method, n, eps, "best_f1", res["best_f1"], seed))
    return rows, unconverged


def _table(rows, windows, methods) -> str:
    agg: dict = {}
    for r in rows:
        agg.setdefault((r["method"], r["n"], r["metric"]), []).append(r["value"])
    head = ["Method"] + [f"AUC-PR n={n}" for n in windows] + [f"Best F1 n={n}" for n in windows]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for m in methods:
        cells = [m]
        for metric in ("auc_pr", "best_f1"):
            for n in windows:
                vals = agg.get((m, n, metric))
                cells.append("" if vals is None else f"{np.mean(vals):.3f}")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    base = _seed(args)
    xi = _resolve(args, "xi") or 20
    windows = [args.window] if args.window else list(args.windows)
    methods = [_parse_method(m) for m in args.methods]
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    series = _read_input(args) if args.input else None
    dataset = Path(args.input).stem if args.input else "paper-synthetic"
    labels = [GofStatistic(k, epsilon=e).label for k, e in methods]
    cells = [(k, e, n) for k, e in methods for n in windows]
    seeds = list(range(base, base + args.seeds))
    job = partial(_sweep_instance, cells=cells, xi=xi, series=series, dataset=dataset)
    results = ordered_map(job, seeds, args.workers)
    rows = [r for rs, _ in results for r in rs]
    unconverged = sum(u for _, u in results)

    out = _out_dir(args)
    _write_jsonl(out / "report.jsonl", rows)
    table = _table(rows, windows, labels)
    (out / "table.md").write_text(table)
    _echo(args, out, seed=base, resolved={"xi": xi, "windows": windows}, unconverged=unconverged)
    print(table, end="")
    if unconverged:
        msg = f"{unconverged} windows hit the Sinkhorn iteration limit"
        if args.strict:
            raise NonConvergence(msg)
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK


def _null_draw(setting: str, size: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if setting == "cauchy":
        return rng.standard_cauchy((size, d))
    if setting == "gaussian":
        cov = 0.5 * np.eye(d) + 0.5 * np.ones((d, d))
        return Gaussian(0.0, cov.tolist()).sample(rng, size, d)
    if setting == "gaussian-diag":
        return Gaussian(0.0, np.diag(np.arange(1.0, d + 1)).tolist()).sample(rng, size, d)
    if setting == "laplace":
        return Laplace(0.0, 1.0).sample(rng, size, d)
    raise UsageError(f"unknown null setting {setting!r}; choose from {NULL_SETTINGS}")


def cmd_null(args) -> int:
    seed = _seed(args)
    stat = _stat(args.stat, args.epsilon, seed)
    m = n = args.size
    if args.input:
        series = _read_input(args)
        if series.T < 2:
            raise DataError("need at least two rows for a null split")
        m, n = series.T // 2, series.T - series.T // 2
        pools = {Path(args.input).stem: series.values}
    else:
        if args.size < 1 or args.dim < 1:
            raise UsageError("--size and --dim must be >= 1")
        streams = np.random.SeedSequence(seed).spawn(len(args.settings))
        pools = {
            s: _null_draw(s, 2 * args.size, args.dim, np.random.default_rng(st))
            for s, st in zip(args.settings, streams)
        }
    samples = {}
    for name, pooled in pools.items():
        ns = null_calibration(pooled, (m, n), stat, B=args.B, seed=seed, workers=args.workers)
        samples[name] = ns.values
    out = _out_dir(args)
    with open(out / "null_values.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "value"])
        for name, vals in samples.items():
            for v in vals:
                w.writerow([name, f"{v:.17g}"])
    plot_null_svg(samples, out / "null.svg", title=f"{stat.label} null, m=n={m}")
    summary = {k: {"q50": float(np.quantile(v, 0.5)), "q95": float(np.quantile(v, 0.95))}
               for k, v in samples.items()}
    _echo(args, out, seed=seed, stat_config=stat.to_dict(), quantiles=summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def _strs(text):
    return [x for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config echoed by a previous run; flags override it")
    common.add_argument("--input", help="input CSV (one row per time step)")
    common.add_argument("--labels", help="label file, one 0-based change index per line")
    common.add_argument("--output-dir", default="otcpd-out")
    common.add_argument("--stat", choices=KINDS, default="sre")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--window", type=int, help="window size n")
    common.add_argument("--eta", type=float, help="detection threshold")
    common.add_argument("--delta", type=int, help="minimum distance between detections")
    common.add_argument("--xi", type=int, help="margin of error for scoring")
    common.add_argument("--stride", type=int, default=1)
    common.add_argument("--seed", type=int, help="default: $OTCPD_SEED, else 0")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--strict", action="store_true", help="treat solver non-convergence as fatal")

    parser = argparse.ArgumentParser(prog="otcpd", description="Optimal-transport rank change point detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic series and labels")
    g.add_argument("--spec", help="JSON segment spec (overrides the built-in schedule)")
    g.add_argument("--dim", type=int, default=10)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", parents=[common], help="sliding-window statistic and peak search")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", parents=[common], help="score a z-series against labels")
    e.add_argument("--method", default="unknown", help="method name recorded in the report")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="grid of windows and methods over seeds")
    s.add_argument("--windows", type=_ints, default=list(SWEEP_WINDOWS))
    s.add_argument("--methods", type=_strs, default=list(SWEEP_METHODS),
                   help="comma list of kind or kind:epsilon, e.g. re,sre:0.1")
    s.add_argument("--seeds", type=int, default=25, help="number of instances")
    s.set_defaults(func=cmd_sweep)

    nl = sub.add_parser("null", parents=[common], help="permutation null samples and density plot")
    nl.add_argument("--settings", type=_strs, default=list(NULL_SETTINGS[1:3]))
    nl.add_argument("--size", type=int, default=200, help="m = n")
    nl.add_argument("--dim", type=int, default=2)
    nl.add_argument("--B", type=int, default=1000)
    nl.set_defaults(func=cmd_null)
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if cfg.get("command") != args.command:
        raise UsageError(f"config was written by {cfg.get('command')!r}, not {args.command!r}")
    sub = next(a for a in parser._subparsers._group_actions if a.dest == "command")
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions}
    subparser.set_defaults(**{k: v for k, v in cfg.items() if k in known and k not in _NOT_ECHOED})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.stride < 1 or args.workers < 1:
            raise UsageError("--stride and --workers must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"otcpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"otcpd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonConvergence as exc:
        print(f"otcpd: {exc} (--strict)", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"otcpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
