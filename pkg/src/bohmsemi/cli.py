"""Command line: ``bohmsemi run | figures | check``.

Exit status 0 on success, 2 when the configuration is invalid (the message
names the field), 3 when more steps were flagged than ``max_flagged`` allows.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigError, MissingData
from .io import emit_figures, write_json_atomic
from .runner import RUNNERS

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_DATA = 0, 2, 3, 4


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("BOHMSEMI_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"BOHMSEMI_THREADS: expected an integer, got {env!r}", field="BOHMSEMI_THREADS")
        if n < 1:
            raise ConfigError("BOHMSEMI_THREADS: must be at least 1", field="BOHMSEMI_THREADS")
        return n
    return 1


def run(config_path, out=None, seed=None, plots=False, threads=None, quiet=False) -> int:
    """Execute one scenario; returns the exit status."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            if seed < 0:
                raise ConfigError("seed: must be non-negative", field="seed")
            cfg.seed = seed
        if out is not None:
            cfg.output = str(out)
        nthreads = _threads(threads)
        if nthreads < 1:
            raise ConfigError("threads: must be at least 1", field="threads")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    write_json_atomic(outdir / "config.json", cfg.to_dict())
    t0 = time.perf_counter()
    try:
        result = RUNNERS[cfg.kind](cfg, outdir, nthreads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - t0
    flagged = result.pop("flagged_steps", 0)
    manifest = {"config": cfg.to_dict(), "version": __version__, "wall_time_s": wall,
                "checks": result["checks"], "flags": result["flags"], "flagged_steps": flagged,
                "summary": result.get("summary", {}), "figures": result.get("figures", []),
                "threads": nthreads}
    write_json_atomic(outdir / "manifest.json", manifest)
    if plots:
        emit_figures(outdir)
    if not quiet:
        for c in result["checks"]:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']} (threshold {c['threshold']})")
        print(f"wrote {outdir} in {wall:.2f} s")
    if flagged > cfg.max_flagged:
        print(f"error: {flagged} flagged steps exceed max_flagged = {cfg.max_flagged}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="bohmsemi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config", help="TOML scenario file, or config.json from a run directory")
    r.add_argument("--plots", action="store_true", help="also write SVG figures")
    r.add_argument("--seed", type=int, help="override the configured seed")
    r.add_argument("--out", help="output directory (overrides the configured one)")
    r.add_argument("--threads", type=int, help="worker threads (default $BOHMSEMI_THREADS or 1)")
    f = sub.add_parser("figures", help="draw SVG figures for a finished run")
    f.add_argument("run_dir")
    c = sub.add_parser("check", help="validate a scenario file without running it")
    c.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.seed, args.plots, args.threads)
    if args.command == "figures":
        try:
            for p in emit_figures(args.run_dir):
                print(p)
        except MissingData as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.kind} scenario '{cfg.name}' -> {cfg.output}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
