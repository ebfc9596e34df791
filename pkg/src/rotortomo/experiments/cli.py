"""``rotortomo`` command line.

    rotortomo ed --n-sites 3 --R 1.0 --out runs/ed
    rotortomo sample --config sample.cfg --seed 7 --out runs/data
    rotortomo train --dataset runs/data/dataset.txt --n-hidden 4 --out runs/train

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 learning target
not reached. Every invocation writes ``<command>_manifest.json`` to ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from ..eigensolver import ConvergenceError, DegenerateGroundStateError
from ..rbm import CheckpointError, DivergenceError
from ..sampling import DatasetFormatError
from .commands import (
    COMMANDS,
    EXIT_CONFIG,
    EXIT_NOT_REACHED,
    EXIT_NUMERICAL,
    EXIT_OK,
    CriterionNotReached,
    RunOutcome,
)
from .config import SCHEMAS, ConfigError, format_value, read_config_file, resolve

log = logging.getLogger("rotortomo")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotortomo", description="Dipolar rotor chains and RBM reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, help=(COMMANDS[name].__doc__ or "").splitlines()[0])
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key, spec in schema.items():
            default = format_value(spec.default) if spec.default is not None else "required" if spec.required else ""
            p.add_argument(
                "--" + key.replace("_", "-"), dest=key, metavar=key.upper(), default=None,
                help=f"{spec.help} (default: {default})",
            )
    return parser


def _versions() -> dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"rotortomo": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _write_manifest(out: Path, command: str, cfg: dict, outcome: RunOutcome, code: int, error: str | None, t0, started):
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "exit_code": code,
        "error": error,
        "outputs": outcome.outputs,
        "summary": outcome.summary,
        "versions": _versions(),
        "started": started,
        "timings": {**outcome.timings, "wall": time.perf_counter() - t0},
    }
    path = out / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=_json_default, allow_nan=False) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else format_value(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(value):
    # json cannot hold inf/nan; keep them as text
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return str(float(value))
    return value


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    flags = {k: getattr(args, k) for k in SCHEMAS[args.command]}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(args.command, file_values, flags)
    except ConfigError as exc:
        print(f"rotortomo {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"rotortomo {args.command}: cannot create {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG

    outcome, code, error = RunOutcome(), EXIT_OK, None
    try:
        outcome = COMMANDS[args.command](cfg, out)
    except CriterionNotReached as exc:
        outcome, code, error = exc.outcome, EXIT_NOT_REACHED, str(exc)
    except (ConfigError, DatasetFormatError, CheckpointError, FileNotFoundError) as exc:
        code, error = EXIT_CONFIG, str(exc)
    except (ConvergenceError, DegenerateGroundStateError, DivergenceError, FloatingPointError) as exc:
        code, error = EXIT_NUMERICAL, str(exc)
    if error:
        print(f"rotortomo {args.command}: {error}", file=sys.stderr)
    outcome.summary = _clean(outcome.summary)
    _write_manifest(out, args.command, _clean(cfg), outcome, code, error, t0, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
