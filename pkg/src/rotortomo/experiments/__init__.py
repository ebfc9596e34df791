"""Reproducible experiment drivers and the ``rotortomo`` command line."""
from .commands import (
    COMMANDS,
    EQUILIBRATION_COLUMNS,
    TRACE_COLUMNS,
    CriterionNotReached,
    EquilibrationRow,
    RunOutcome,
    ScalingResult,
    cmd_ed,
    cmd_equilibrate,
    cmd_sample,
    cmd_scale_data,
    cmd_scale_hidden,
    cmd_signs,
    cmd_train,
    default_data_grid,
    derive_seed,
    equilibration_scan,
    train_once,
    write_csv,
)
from .config import SCHEMAS, ConfigError, read_config_file, resolve
from .cli import main

__all__ = [
    "COMMANDS", "EQUILIBRATION_COLUMNS", "TRACE_COLUMNS", "CriterionNotReached", "EquilibrationRow", "RunOutcome",
    "ScalingResult", "cmd_ed", "cmd_equilibrate", "cmd_sample", "cmd_scale_data", "cmd_scale_hidden", "cmd_signs",
    "cmd_train", "default_data_grid", "derive_seed", "equilibration_scan", "train_once", "write_csv", "SCHEMAS",
    "ConfigError", "read_config_file", "resolve", "main",
]
