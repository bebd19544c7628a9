"""Command-line entry point: ``python3 -m artifact <experiment> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import experiments as ex
from .homodyne import DatasetError, PhaseFitError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
log = logging.getLogger("artifact")


def read_config(path) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ex.ConfigError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ex.ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def dumps_fixed(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits (byte-stable across runs)."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps_fixed(v, indent, _level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[" + ", ".join(dumps_fixed(v, indent, _level + 1) for v in obj) + "]"
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return json.dumps(str(obj))
        return format(obj, ".17g") if obj != int(obj) or abs(obj) >= 1e16 else format(obj, ".1f")
    return json.dumps(obj)


def version_stamp() -> str:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                              capture_output=True, text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{pkg}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return pkg


class OutputLock:
    """Exclusive marker file held for the duration of a run."""

    def __init__(self, out: Path):
        self.path = out / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OSError(f"output directory {self.path.parent} is locked by another run") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact", description="Quantum-optics simulation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in ex.RUNNERS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", type=Path, help="flat key = value parameter file")
        sp.add_argument("--seed", type=int, help="64-bit seed (required for sampling runs)")
        sp.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        sp.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", default=[],
                        help="override a parameter (repeatable; wins over --config)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ex.ConfigError("seed must be an unsigned 64-bit integer")
        file_params = read_config(args.config) if args.config else {}
        params = ex.merge_params(args.experiment, file_params, parse_overrides(args.overrides))
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        with OutputLock(args.out):
            res = ex.run(args.experiment, params, args.seed, args.out)
            stamp = version_stamp()
            payload = {"experiment": res.experiment, "seed": res.seed, "config": res.config,
                       "version": stamp, "metrics": res.metrics,
                       "artifacts": {k: Path(v).name for k, v in res.artifacts.items()}}
            (args.out / "metrics.json").write_text(dumps_fixed(_plain(payload)) + "\n")
            provenance = {"version": stamp, "wall_clock_s": res.wall_clock, "argv": list(argv or sys.argv[1:]),
                          "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}
            (args.out / "provenance.json").write_text(dumps_fixed(_plain(provenance)) + "\n")
            (args.out / "config.txt").write_text("".join(f"{k} = {v}\n" for k, v in sorted(res.config.items())))
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ex.NumericFailure, PhaseFitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # parameter values the physics layer rejects (guards, ranges)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("wrote %s", args.out)
    print(dumps_fixed(_plain({"experiment": res.experiment, "wall_clock_s": res.wall_clock,
                              "out": str(args.out)})))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
