"""Experiment front-end: run training, verify oracles, print configurations.

Usage:
    regime-q run --preset emv_p1 [--seed N] [--iters N] [--out DIR] [--svg]
    regime-q run --config PATH [--seed N] [--iters N] [--out DIR] [--svg]
    regime-q verify --level fast|full
    regime-q print-config --preset emv_p1

Each run writes ``trace.csv`` (one row per iteration) and ``manifest.json``;
``--svg`` adds a four-panel convergence plot with true-value guide lines.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import COORDS, LearningConfig, get_preset, load_config, serialize_config
from .errors import ConfigError
from .learn import TrainTrace, run

TRACE_HEADER = "iter,rho1,rho2,sigma1,sigma2,mean_abs_G,clamps,blowups"


def worker_cap() -> int:
    """Worker-thread cap from REGIME_Q_THREADS (informational: the numerical
    core is vectorized single-threaded, so results never depend on it)."""
    raw = os.environ.get("REGIME_Q_THREADS", "")
    try:
        return max(1, int(raw)) if raw else (os.cpu_count() or 1)
    except ValueError:
        return os.cpu_count() or 1


def _fmt_num(v: float) -> str:
    if not np.isfinite(v):
        return "nan"
    return np.format_float_positional(float(v), precision=10, unique=False,
                                      fractional=False, trim="k")


def trace_csv_text(trace: TrainTrace) -> str:
    lines = [TRACE_HEADER]
    for n in range(len(trace)):
        row = [str(n + 1)]
        row += [_fmt_num(v) for v in trace.params[n]]
        row.append(_fmt_num(trace.mean_abs_G[n]))
        row.append(str(int(trace.clamps[n])))
        row.append(str(int(trace.blowups[n])))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def convergence_svg(trace: TrainTrace, theta_true=None, width=900, height=640) -> str:
    """Self-contained four-panel parameter-trace plot."""
    names = list(COORDS)
    pw, ph = width // 2, height // 2
    margin = 42
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="monospace" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    n = len(trace)
    xs = np.arange(1, n + 1)
    for idx, name in enumerate(names):
        ox = (idx % 2) * pw
        oy = (idx // 2) * ph
        ys = trace.params[:, idx]
        lo = float(np.nanmin(ys))
        hi = float(np.nanmax(ys))
        if theta_true is not None:
            lo = min(lo, theta_true[idx])
            hi = max(hi, theta_true[idx])
        pad = 0.08 * max(hi - lo, 1e-6)
        lo, hi = lo - pad, hi + pad

        def px(x):
            return ox + margin + (x - 1) / max(n - 1, 1) * (pw - margin - 12)

        def py(y):
            return oy + ph - margin + (y - lo) / (hi - lo) * (margin + 18 - ph)

        parts.append(f'<rect x="{ox + margin}" y="{oy + 18}" width="{pw - margin - 12}" '
                     f'height="{ph - margin - 18}" fill="none" stroke="#999"/>')
        parts.append(f'<text x="{ox + margin}" y="{oy + 14}">{name}</text>')
        parts.append(f'<text x="{ox + margin}" y="{oy + ph - 6}">iter 1..{n}   '
                     f'range [{lo:.3g}, {hi:.3g}]</text>')
        if theta_true is not None:
            ty = py(theta_true[idx])
            parts.append(f'<line x1="{px(1):.1f}" y1="{ty:.1f}" x2="{px(n):.1f}" y2="{ty:.1f}" '
                         f'stroke="#2a7" stroke-dasharray="5,4"/>')
        step = max(1, n // 1200)
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in
                       zip(xs[::step], ys[::step]) if np.isfinite(y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#36c" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def run_experiment(cfg: LearningConfig, out_dir: str, svg: bool = False,
                   echo=print) -> int:
    """Train, then write trace.csv, manifest.json, and optionally trace.svg."""
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.time()
    trace = run(cfg)
    elapsed = time.time() - t0
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()

    trace_path = os.path.join(out_dir, "trace.csv")
    _atomic_write(trace_path, trace_csv_text(trace))
    outputs = {"trace": trace_path}
    if svg:
        svg_path = os.path.join(out_dir, "trace.svg")
        _atomic_write(svg_path, convergence_svg(trace, cfg.theta_true))
        outputs["svg"] = svg_path

    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "started": started,
        "finished": finished,
        "elapsed_seconds": round(elapsed, 3),
        "worker_cap": worker_cap(),
        "outputs": outputs,
        "final_params": [float(v) for v in trace.params[-1]],
        "config": serialize_config(cfg),
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2) + "\n")
    echo(f"wrote {trace_path} ({len(trace)} iterations, {elapsed:.1f}s)")
    final = trace.params[-1]
    echo("final parameters: " + ", ".join(f"{c}={v:.4f}" for c, v in zip(COORDS, final)))
    return 0


def _resolve_config(args) -> LearningConfig:
    if bool(args.preset) == bool(args.config):
        raise ConfigError("specify exactly one of --preset or --config")
    cfg = get_preset(args.preset) if args.preset else load_config(args.config)
    return cfg.with_overrides(seed=args.seed, n_iters=args.iters)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="regime-q", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train on a preset or config file")
    p_run.add_argument("--preset", choices=["emv_p1", "emv_p2"])
    p_run.add_argument("--config", metavar="PATH")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--iters", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--svg", action="store_true")

    p_verify = sub.add_parser("verify", help="run the cross-module oracle battery")
    p_verify.add_argument("--level", choices=["fast", "full"], default="fast")

    p_print = sub.add_parser("print-config", help="print a preset configuration")
    p_print.add_argument("--preset", required=True, choices=["emv_p1", "emv_p2"])

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(_resolve_config(args), args.out, svg=args.svg)
        if args.command == "verify":
            from .verify import run_suite

            results = run_suite(args.level)
            return 0 if all(r.passed for r in results) else 1
        if args.command == "print-config":
            print(serialize_config(get_preset(args.preset)), end="")
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
