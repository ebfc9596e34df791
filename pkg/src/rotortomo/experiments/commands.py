"""Experiment drivers behind the command line.

Each ``cmd_*`` takes a resolved config (see :mod:`.config`) and an output
directory, writes its CSV files there and returns a :class:`RunOutcome`.
Failures are raised as exceptions; :mod:`.cli` turns them into exit codes.
"""
from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from ..basis import HilbertSpace
from ..eigensolver import GroundStateSolution, amplitude_ratio, ground_state
from ..estimators import EnergyEvaluator, delta, energy_rbm, symmetry_violation_fraction
from ..hamiltonian import SparseHamiltonian, build_hamiltonian
from ..rbm import (
    DivergenceError,
    GibbsChainState,
    RbmParameters,
    TrainingResult,
    gibbs_sample,
    load_params,
    save_params,
    train,
)
from ..sampling import empirical_distribution, read_dataset, sample_exact, write_dataset
from ..signs import sign_metrics
from .config import ConfigError, format_value, training_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NOT_REACHED = 4

# stream tags for derived seeds
_INIT, _EVAL, _SHUFFLE = 1, 2, 3


class CriterionNotReached(RuntimeError):
    """Raised after outputs are written when the learning target was missed."""

    def __init__(self, message: str, outcome: "RunOutcome"):
        super().__init__(message)
        self.outcome = outcome


@dataclass
class RunOutcome:
    outputs: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScalingResult:
    axis_value: int
    reached: bool
    epochs_used: int
    final_delta: float
    trace: str


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 32-bit seed for the stream ``(seed, *keys)``."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence], config: dict[str, Any]) -> str:
    """CSV preceded by ``# key = value`` lines holding the resolved config."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in config.items():
            fh.write(f"# {key} = {format_value(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return str(path)


class _Timer:
    def __init__(self, timings: dict[str, float], name: str):
        self.timings, self.name = timings, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self.t0


def _solve(n_sites: int, ell_max: int, R: float, cfg: dict) -> tuple[SparseHamiltonian, GroundStateSolution]:
    H = build_hamiltonian(HilbertSpace(n_sites, ell_max), R)
    sol = ground_state(H, cfg["tol"], method=cfg["method"], seed=cfg["seed"], krylov_dim=cfg["krylov_dim"])
    log.info("N=%d ell_max=%d R=%g: E0=%.12f gap=%.12f", n_sites, ell_max, R, sol.energy_0, sol.gap)
    return H, sol


def _ratio(sol: GroundStateSolution) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return amplitude_ratio(sol)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ed(cfg: dict, out: Path) -> RunOutcome:
    """Ground energy, gap, amplitude ratio and a symmetry-sector check."""
    res = RunOutcome()
    with _Timer(res.timings, "solve"):
        H, sol = _solve(cfg["n_sites"], cfg["ell_max"], cfg["R"], cfg)
    mask = H.space.sector_mask(0, 0)
    leak = float(np.sum(sol.amplitudes[~mask] ** 2))
    row = dict(
        n_sites=cfg["n_sites"], ell_max=cfg["ell_max"], R=cfg["R"], energy_0=sol.energy_0, energy_1=sol.energy_1,
        gap=sol.gap, amplitude_ratio=_ratio(sol), sector_leak=leak, residual=sol.residual, method=sol.method,
    )
    res.outputs.append(write_csv(out / "ed.csv", list(row), [list(row.values())], cfg))
    res.summary = row
    return res


def cmd_signs(cfg: dict, out: Path) -> RunOutcome:
    """tau_minus, epsilon and epsilon / gap over a grid of (R, ell_max)."""
    res = RunOutcome()
    rows = []
    for R in cfg["R"]:
        for ell_max in cfg["ell_max"]:
            with _Timer(res.timings, "solve"):
                H, sol = _solve(cfg["n_sites"], ell_max, R, cfg)
            tau, eps = sign_metrics(sol, H)
            rows.append([cfg["n_sites"], R, ell_max, tau, eps, sol.gap, eps / sol.gap])
    cols = ["n_sites", "R", "ell_max", "tau_minus", "epsilon", "gap", "epsilon_over_gap"]
    res.outputs.append(write_csv(out / "signs.csv", cols, rows, cfg))
    res.summary = {"rows": len(rows), "max_tau_minus": max(r[3] for r in rows)}
    return res


def cmd_sample(cfg: dict, out: Path) -> RunOutcome:
    """Exact projective measurements from the ground state."""
    res = RunOutcome()
    with _Timer(res.timings, "solve"):
        H, sol = _solve(cfg["n_sites"], cfg["ell_max"], cfg["R"], cfg)
    with _Timer(res.timings, "sample"):
        ds = sample_exact(sol, cfg["count"], cfg["seed"])
    path = out / cfg["dataset"]
    write_dataset(ds, path)
    tv = 0.5 * float(np.abs(empirical_distribution(ds) - sol.amplitudes**2).sum())
    row = [cfg["n_sites"], cfg["ell_max"], cfg["R"], cfg["count"], cfg["seed"], sol.energy_0, sol.gap, tv]
    cols = ["n_sites", "ell_max", "R", "count", "seed", "energy_0", "gap", "tv_distance"]
    res.outputs += [str(path), write_csv(out / "sample.csv", cols, [row], cfg)]
    res.summary = dict(zip(cols, row))
    return res


TRACE_COLUMNS = ["epoch", "delta", "delta_stderr", "kinetic", "potential"]


def _load_dataset(cfg: dict):
    path = Path(cfg["dataset"])
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    return read_dataset(path)


def train_once(ds, n_hidden: int, cfg: dict, seed: int, H, sol) -> TrainingResult:
    """One seeded training run from fresh parameters."""
    tcfg = training_config(cfg, seed=derive_seed(seed, _SHUFFLE))
    params = RbmParameters.initialize(
        ds.n_sites, n_hidden, ds.space.local_dim, seed=derive_seed(seed, _INIT), scale=cfg["init_scale"]
    )
    evaluator = EnergyEvaluator(
        H, sol.energy_0, sol.gap, n_samples=tcfg.eval_samples, gibbs_steps=tcfg.eval_gibbs_steps,
        seed=derive_seed(seed, _EVAL),
    )
    return train(params, ds, tcfg, evaluator)


def cmd_train(cfg: dict, out: Path) -> RunOutcome:
    """Train one RBM on a dataset; writes the trace and a checkpoint."""
    res = RunOutcome()
    ds = _load_dataset(cfg)
    with _Timer(res.timings, "solve"):
        H, sol = _solve(ds.n_sites, ds.ell_max, ds.R, cfg)
    trace_path = out / "trace.csv"
    try:
        with _Timer(res.timings, "train"):
            result = train_once(ds, cfg["n_hidden"], cfg, cfg["seed"], H, sol)
    except DivergenceError as exc:
        res.outputs.append(write_csv(trace_path, TRACE_COLUMNS, exc.trace, cfg))
        raise
    res.outputs.append(write_csv(trace_path, TRACE_COLUMNS, result.trace, cfg))
    ckpt = out / cfg["checkpoint"]
    save_params(result.params, ckpt)
    res.outputs.append(str(ckpt))
    res.summary = dict(
        reached=result.reached, epochs=result.epochs, final_delta=result.final_delta, best_delta=result.best_delta,
        energy_0=sol.energy_0, gap=sol.gap,
    )
    if not result.reached:
        raise CriterionNotReached(f"delta <= {cfg['target_delta']} not reached in {result.epochs} epochs", res)
    return res


def _scan(cfg: dict, out: Path, axis: str, grid: Sequence[int], run) -> tuple[RunOutcome, list[ScalingResult]]:
    res = RunOutcome()
    results: list[ScalingResult] = []
    for value in grid:
        best = None
        for attempt in range(cfg["retries"]):
            seed = derive_seed(cfg["seed"], value, attempt)
            with _Timer(res.timings, "train"):
                tr = run(value, seed)
            trace = out / f"trace_{axis}_{value}_{attempt}.csv"
            res.outputs.append(write_csv(trace, TRACE_COLUMNS, tr.trace, {**cfg, axis: value, "run_seed": seed}))
            best = ScalingResult(value, tr.reached, tr.epochs, tr.final_delta, trace.name)
            log.info("%s=%d attempt %d: reached=%s delta=%.4f", axis, value, attempt, tr.reached, tr.final_delta)
            if tr.reached:
                break
        results.append(best)
        if best.reached:
            break
    rows = [[r.axis_value, r.reached, r.epochs_used, r.final_delta, r.trace] for r in results]
    cols = [axis, "reached", "epochs_used", "final_delta", "trace"]
    res.outputs.append(write_csv(out / f"scale_{axis}.csv", cols, rows, cfg))
    return res, results


def cmd_scale_hidden(cfg: dict, out: Path) -> RunOutcome:
    """Smallest hidden layer on the grid that reaches the learning target."""
    ds = _load_dataset(cfg)
    H, sol = _solve(ds.n_sites, ds.ell_max, ds.R, cfg)
    res, results = _scan(cfg, out, "n_hidden", cfg["hidden_grid"], lambda nh, seed: train_once(ds, nh, cfg, seed, H, sol))
    hit = [r.axis_value for r in results if r.reached]
    res.summary = {"n_hidden_min": hit[0] if hit else None, "points": len(results)}
    if not hit:
        raise CriterionNotReached("no hidden size on the grid reached the target", res)
    return res


def default_data_grid(available: int, start: int = 500) -> list[int]:
    grid, size = [], start
    while size <= available:
        grid.append(size)
        size *= 2
    return grid


def cmd_scale_data(cfg: dict, out: Path) -> RunOutcome:
    """Smallest dataset (a prefix of the file) that reaches the learning target."""
    ds = _load_dataset(cfg)
    grid = cfg["data_grid"] or default_data_grid(len(ds))
    too_big = [g for g in grid if g > len(ds) or g < 1]
    if too_big:
        raise ConfigError(f"data_grid entries {too_big} exceed the {len(ds)} samples in the dataset")
    H, sol = _solve(ds.n_sites, ds.ell_max, ds.R, cfg)
    res, results = _scan(
        cfg, out, "data_size", grid, lambda size, seed: train_once(ds.subset(size), cfg["n_hidden"], cfg, seed, H, sol)
    )
    hit = [r.axis_value for r in results if r.reached]
    res.summary = {"data_size_min": hit[0] if hit else None, "points": len(results)}
    if not hit:
        raise CriterionNotReached("no dataset size on the grid reached the target", res)
    return res


@dataclass(frozen=True)
class EquilibrationRow:
    k: int
    delta_ns: float
    delta_ns_stderr: float
    delta_s: float | None
    delta_s_stderr: float | None
    f_ns: float
    f_ns_stderr: float
    n_symmetric: int


EQUILIBRATION_COLUMNS = [
    "k", "delta_ns", "delta_ns_stderr", "delta_s", "delta_s_stderr", "f_ns", "f_ns_stderr", "n_symmetric",
]


def equilibration_scan(
    params: RbmParameters, H: SparseHamiltonian, e_exact: float, gap: float, ks: Sequence[int], n_chains: int, seed: int
) -> list[EquilibrationRow]:
    """delta over all samples (NS), over symmetry-conserving ones (S), and f_NS per k.

    For every ``k`` a fresh set of ``n_chains`` chains starts from the all-zero
    configuration.
    """
    start = GibbsChainState.all_zero(params.n_sites, params.local_dim)
    rows = []
    for k in ks:
        samples = gibbs_sample(params, start, k, n_chains, derive_seed(seed, k))
        est = energy_rbm(params, samples, H)
        split = symmetry_violation_fraction(samples)
        f = split.fraction
        if len(split.symmetric):
            s = energy_rbm(params, split.symmetric, H)
            d_s, d_s_err = delta(s.total, e_exact, gap), s.std_error / gap
        else:
            d_s = d_s_err = None
        rows.append(
            EquilibrationRow(
                k, delta(est.total, e_exact, gap), est.std_error / gap, d_s, d_s_err, f,
                math.sqrt(f * (1 - f) / n_chains), len(split.symmetric),
            )
        )
        log.info("k=%d: delta_NS=%.4f delta_S=%s f_NS=%.4f", k, rows[-1].delta_ns, d_s, f)
    return rows


def cmd_equilibrate(cfg: dict, out: Path) -> RunOutcome:
    """delta_NS, delta_S and f_NS against the number of Gibbs steps."""
    res = RunOutcome()
    path = Path(cfg["checkpoint"])
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    params = load_params(path)
    ell_max = math.isqrt(params.local_dim) - 1
    with _Timer(res.timings, "solve"):
        H, sol = _solve(params.n_sites, ell_max, cfg["R"], cfg)
    with _Timer(res.timings, "sample"):
        rows = equilibration_scan(params, H, sol.energy_0, sol.gap, cfg["k_schedule"], cfg["n_chains"], cfg["seed"])
    res.outputs.append(
        write_csv(out / "equilibrate.csv", EQUILIBRATION_COLUMNS, [list(vars(r).values()) for r in rows], cfg)
    )
    res.summary = {"k_values": len(rows), "f_ns_first": rows[0].f_ns, "f_ns_last": rows[-1].f_ns}
    return res


COMMANDS = {
    "ed": cmd_ed,
    "signs": cmd_signs,
    "sample": cmd_sample,
    "train": cmd_train,
    "scale-hidden": cmd_scale_hidden,
    "scale-data": cmd_scale_data,
    "equilibrate": cmd_equilibrate,
}
