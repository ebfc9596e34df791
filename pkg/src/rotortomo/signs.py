"""Sign structure of real wavefunctions and the cost of discarding it.

The basis is split by the sign of each amplitude relative to a reference state
(``|00, ..., 00>`` by default). The rectified state keeps every magnitude but
gives it the reference sign; ``tau_minus`` is the weight on the opposite-sign
states, and ``epsilon`` the resulting error in an expectation value.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Union

import numpy as np

from .basis import HilbertSpace
from .eigensolver import GroundStateSolution, ground_state
from .hamiltonian import SparseHamiltonian, build_hamiltonian

Operator = Union[np.ndarray, SparseHamiltonian, Callable[[np.ndarray], np.ndarray]]


class ReferenceError(ValueError):
    """The chosen reference amplitude vanishes, so it cannot fix a sign."""


@dataclass(frozen=True, eq=False)
class SignPartition:
    reference_index: int
    negative_mask: np.ndarray
    tau_minus: float
    tau_plus: float


def _as_matvec(A: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(A, SparseHamiltonian):
        return A.apply
    if callable(A):
        return A
    A = np.asarray(A)
    return lambda v: A @ v


def partition_signs(psi: np.ndarray, reference: int = 0) -> SignPartition:
    psi = np.asarray(psi, dtype=np.float64)
    ref = psi[reference]
    if ref == 0:
        raise ReferenceError(f"psi vanishes at reference index {reference}; choose another reference")
    negative = psi * ref < 0
    p = psi**2
    tau_minus = float(p[negative].sum())
    tau_plus = float(p[~negative].sum())
    return SignPartition(int(reference), negative, tau_minus, tau_plus)


def rectify(psi: np.ndarray, partition: SignPartition) -> np.ndarray:
    """``P+ psi - P- psi``: magnitudes of ``psi`` carrying the reference sign."""
    psi = np.asarray(psi, dtype=np.float64)
    return np.where(partition.negative_mask, -psi, psi)


def epsilon_general(psi: np.ndarray, A: Operator, partition: SignPartition) -> float:
    """``<psi_r|A|psi_r> - <psi|A|psi>`` evaluated directly."""
    matvec = _as_matvec(A)
    rect = rectify(psi, partition)
    return float(rect @ matvec(rect) - psi @ matvec(psi))


def epsilon_projector_form(psi: np.ndarray, A: Operator, partition: SignPartition) -> float:
    """``-4 <psi|P+ A P-|psi>`` for real symmetric ``A``."""
    matvec = _as_matvec(A)
    neg = partition.negative_mask
    minus = np.where(neg, psi, 0.0)
    plus = np.where(neg, 0.0, psi)
    return float(-4.0 * (plus @ matvec(minus)))


def epsilon_energy(
    solution: GroundStateSolution,
    H: SparseHamiltonian,
    partition: SignPartition,
    max_residual: float = 1e-8,
) -> float:
    """Energy error of rectification for an eigenstate: ``-4 E tau- + 4 <psi|P- H P-|psi>``."""
    if solution.residual > max_residual:
        raise ValueError(f"solution residual {solution.residual:.2e} too large for the eigenstate form")
    minus = np.where(partition.negative_mask, solution.amplitudes, 0.0)
    if not minus.any():
        return 0.0
    return float(-4.0 * solution.energy_0 * partition.tau_minus + 4.0 * (minus @ H.apply(minus)))


def stoquasticity_check(H: SparseHamiltonian, threshold: float = 1e-14) -> tuple[bool, float]:
    """Whether every off-diagonal element is non-positive, and the largest one.

    Off-diagonal elements come from the sparse row enumeration, so this works
    without densifying.
    """
    if H.inv_r3 == 0.0 or H.space.n_sites < 2:
        return True, 0.0
    biggest = -np.inf
    configs = H.space.all_configs()
    chunk = 50_000
    for start in range(0, len(configs), chunk):
        _, _, vals = H.connected_batch(configs[start : start + chunk])
        if len(vals):
            biggest = max(biggest, float(vals.max()) * H.inv_r3)
    if biggest == -np.inf:
        return True, 0.0
    return biggest <= threshold, biggest


@dataclass(frozen=True)
class ScanRow:
    ell_max: int
    tau_minus: float
    epsilon: float
    gap: float

    @property
    def epsilon_over_gap(self) -> float:
        return self.epsilon / self.gap


def sign_metrics(solution: GroundStateSolution, H: SparseHamiltonian) -> tuple[float, float]:
    """``(tau_minus, epsilon)`` of a ground state against ``|00..0>``."""
    part = partition_signs(solution.amplitudes, 0)
    return part.tau_minus, epsilon_energy(solution, H, part)


def convergence_scan(
    n_sites: int,
    R: float,
    ell_max_list: Iterable[int],
    solver: Callable[[SparseHamiltonian], GroundStateSolution] = ground_state,
) -> list[ScanRow]:
    rows = []
    for ell_max in ell_max_list:
        H = build_hamiltonian(HilbertSpace(n_sites, ell_max), R)
        sol = solver(H)
        tau, eps = sign_metrics(sol, H)
        rows.append(ScanRow(ell_max, tau, eps, sol.gap))
    return rows


SCAN_COLUMNS = ("ell_max", "tau_minus", "epsilon", "gap", "epsilon_over_gap")


def write_scan_csv(rows: Iterable[ScanRow], path, extra: dict | None = None) -> None:
    """CSV with one row per truncation; ``extra`` columns are prepended."""
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*extra, *SCAN_COLUMNS])
        for r in rows:
            writer.writerow(
                [*extra.values(), r.ell_max, *(repr(float(x)) for x in (r.tau_minus, r.epsilon, r.gap, r.epsilon_over_gap))]
            )
