"""Run configuration: typed ``key = value`` files and matching CLI flags.

A config file is UTF-8 text with one ``key = value`` per line; ``#`` starts a
comment. Lists are comma separated. Keys may be spelled with ``-`` or ``_``.
Every key of a command also exists as a ``--key`` flag, and flags win.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from ..rbm import TrainingConfig


class ConfigError(ValueError):
    pass


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _str(text: str) -> str:
    return text


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    help: str = ""
    required: bool = False


_SOLVER = {
    "tol": Key(_float, 1e-10, "eigensolver residual tolerance"),
    "method": Key(_str, "auto", "eigensolver: auto, dense or lanczos"),
    "krylov_dim": Key(_int, 60, "Lanczos basis size before restart"),
}

_SYSTEM = {
    "n_sites": Key(_int, 4, "number of rotors N"),
    "ell_max": Key(_int, 3, "angular momentum truncation"),
    "R": Key(_float, 1.1, "dimensionless separation"),
}

_TRAINING = {
    f.name: Key(_float if f.type in ("float", float) else _int, f.default, f"training: {f.name}")
    for f in dataclasses.fields(TrainingConfig)
    if f.name != "seed"
}
_TRAINING["init_scale"] = Key(_float, 0.01, "std of the initial weights")

_COMMON = {
    "seed": Key(_int, 0, "master seed"),
    "out": Key(_str, ".", "output directory"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "ed": {**_SYSTEM, "ell_max": Key(_int, 5, "angular momentum truncation"), "R": Key(_float, 1.0, "separation"), **_SOLVER},
    "signs": {
        "n_sites": Key(_int, 4, "number of rotors N"),
        "R": Key(_float_list, [1.0], "separations (comma separated)"),
        "ell_max": Key(_int_list, [1, 2, 3, 4, 5], "truncations (comma separated)"),
        **_SOLVER,
    },
    "sample": {
        **_SYSTEM,
        "count": Key(_int, 10_000, "number of measurements"),
        "dataset": Key(_str, "dataset.txt", "dataset file name inside --out"),
        **_SOLVER,
    },
    "train": {
        "dataset": Key(_str, None, "measurement file", required=True),
        "n_hidden": Key(_int, 4, "hidden units"),
        "checkpoint": Key(_str, "model.rbm", "checkpoint file name inside --out"),
        **_TRAINING,
        **_SOLVER,
    },
    "scale-hidden": {
        "dataset": Key(_str, None, "measurement file", required=True),
        "hidden_grid": Key(_int_list, list(range(1, 9)), "hidden sizes to try, in order"),
        "retries": Key(_int, 1, "training runs per grid point"),
        **_TRAINING,
        **_SOLVER,
    },
    "scale-data": {
        "dataset": Key(_str, None, "measurement file", required=True),
        "n_hidden": Key(_int, None, "hidden units (n_h,min + 1)", required=True),
        "data_grid": Key(_int_list, [], "dataset sizes; empty means 500 * 2**i up to the file size"),
        "retries": Key(_int, 1, "training runs per grid point"),
        **_TRAINING,
        "learning_rate": Key(_float, 0.01, "training: learning_rate"),
        **_SOLVER,
    },
    "equilibrate": {
        "checkpoint": Key(_str, None, "trained RBM checkpoint", required=True),
        "R": Key(_float, None, "separation the model was trained at", required=True),
        "k_schedule": Key(_int_list, [1, 3, 10, 30, 100, 300, 1000, 3000, 10000], "Gibbs step counts"),
        "n_chains": Key(_int, 10_000, "independent chains per k"),
        **_SOLVER,
    },
}
for _schema in SCHEMAS.values():
    _schema.update(_COMMON)


def normalise_key(key: str) -> str:
    return key.strip().replace("-", "_")


def read_config_file(path) -> dict[str, str]:
    """Raw ``key -> text`` pairs from a config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        raw[normalise_key(key)] = value.strip()
    return raw


def resolve(command: str, file_values: dict[str, str], flag_values: dict[str, str]) -> dict[str, Any]:
    """Typed config for ``command``: defaults, then the file, then flags."""
    schema = SCHEMAS[command]
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    unknown = sorted(set(merged) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for '{command}': {', '.join(unknown)}")
    out = {}
    for name, key in schema.items():
        if name in merged:
            try:
                out[name] = key.parse(merged[name])
            except ValueError:
                raise ConfigError(f"bad value for {name}: {merged[name]!r}") from None
        elif key.required:
            raise ConfigError(f"'{command}' needs a value for {name}")
        else:
            out[name] = key.default
    _validate(command, out)
    return out


def _validate(command: str, cfg: dict[str, Any]) -> None:
    for name in ("n_sites", "count", "n_hidden", "n_chains", "retries"):
        if isinstance(cfg.get(name), int) and cfg[name] < 1:
            raise ConfigError(f"{name} must be at least 1")
    if isinstance(cfg.get("ell_max"), int) and cfg["ell_max"] < 0:
        raise ConfigError("ell_max must be non-negative")
    Rs = cfg.get("R")
    for R in Rs if isinstance(Rs, list) else [Rs]:
        if R is not None and not R > 0:
            raise ConfigError(f"R must be positive, got {R}")
    for name in ("ell_max", "hidden_grid", "k_schedule", "R"):
        if isinstance(cfg.get(name), list) and not cfg[name]:
            raise ConfigError(f"{name} must not be empty")
    if cfg.get("method") not in (None, "auto", "dense", "lanczos"):
        raise ConfigError(f"unknown method {cfg['method']!r}")
    if cfg.get("tol") is not None and not cfg["tol"] > 0:
        raise ConfigError("tol must be positive")
    if "learning_rate" in cfg:
        try:
            training_config(cfg)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def training_config(cfg: dict[str, Any], seed: int | None = None) -> TrainingConfig:
    names = [f.name for f in dataclasses.fields(TrainingConfig) if f.name != "seed"]
    return TrainingConfig(**{n: cfg[n] for n in names}, seed=cfg["seed"] if seed is None else seed)


def format_value(value: Any) -> str:
    """Config values as text that :func:`resolve` parses back to the same value."""
    if isinstance(value, list):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) and value > 0 else repr(value)
    return "" if value is None else str(value)
