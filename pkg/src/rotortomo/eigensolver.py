"""Ground state, ground energy and first gap of a :class:`SparseHamiltonian`.

Small spaces are diagonalised densely. Larger ones use a thick-restart Lanczos
iteration with full (twice-repeated) reorthogonalisation. The first excited
energy is obtained from a second Lanczos run deflated against the converged
ground state, so it counts multiplicity: a degenerate ground state shows up as
a vanishing gap instead of being silently skipped.
"""
from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .basis import HilbertSpace
from .hamiltonian import SparseHamiltonian

log = logging.getLogger(__name__)

DENSE_AUTO_LIMIT = 4096
GAP_FLOOR = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class DegenerateGroundStateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GroundStateSolution:
    energy_0: float
    energy_1: float
    amplitudes: np.ndarray
    method: str
    residual: float
    space: HilbertSpace | None = None
    R: float | None = None

    @property
    def gap(self) -> float:
        return self.energy_1 - self.energy_0


def _fix_sign(psi: np.ndarray) -> np.ndarray:
    psi = psi / np.linalg.norm(psi)
    pivot = psi[0] if psi[0] != 0 else psi[np.flatnonzero(psi)[0]]
    return -psi if pivot < 0 else psi


def lanczos_lowest(
    matvec: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    tol: float = 1e-10,
    max_matvecs: int = 2000,
    krylov_dim: int = 60,
    locked: np.ndarray | None = None,
) -> tuple[float, np.ndarray, float, int]:
    """Lowest eigenpair of a symmetric operator by thick-restart Lanczos.

    Every new Krylov vector is orthogonalised twice against the whole basis
    (and against ``locked``, rows of orthonormal vectors to deflate). On
    restart the lower half of the Ritz vectors is kept.

    Returns ``(eigenvalue, eigenvector, residual_norm, matvec_count)``;
    raises :class:`ConvergenceError` if ``max_matvecs`` is exhausted.
    """
    n = v0.shape[0]
    locked = np.zeros((0, n)) if locked is None else np.atleast_2d(locked)

    def deflate(w):
        for _ in range(2):
            if len(locked):
                w = w - locked.T @ (locked @ w)
        return w

    m = max(2, min(krylov_dim, n - len(locked)))
    V = np.zeros((m + 1, n))
    T = np.zeros((m + 1, m + 1))
    v = deflate(np.asarray(v0, dtype=np.float64))
    V[0] = v / np.linalg.norm(v)
    start, nmv, best = 0, 0, np.inf

    while True:
        size = m
        beta = 0.0
        for j in range(start, m):
            w = deflate(matvec(V[j]))
            nmv += 1
            basis = V[: j + 1]
            h = basis @ w
            w = w - basis.T @ h
            h2 = basis @ w
            w = deflate(w - basis.T @ h2)
            h = h + h2
            T[: j + 1, j] = h
            T[j, : j + 1] = h
            beta = float(np.linalg.norm(w))
            if beta < 1e-14 * max(1.0, abs(h[j])):
                size = j + 1
                beta = 0.0
                break
            V[j + 1] = w / beta
            T[j + 1, j] = T[j, j + 1] = beta
        theta, S = np.linalg.eigh(T[:size, :size])
        estimate = abs(beta * S[size - 1, 0])
        x = S[:, 0] @ V[:size]
        if estimate <= tol or beta == 0.0 or nmv >= max_matvecs:
            x /= np.linalg.norm(x)
            hx = deflate(matvec(x))
            nmv += 1
            value = float(x @ hx)
            resid = float(np.linalg.norm(hx - value * x))
            best = min(best, resid)
            if resid <= tol:
                return value, x, resid, nmv
            if nmv >= max_matvecs:
                raise ConvergenceError("Lanczos did not converge", best)
        # thick restart: keep the lowest Ritz vectors plus the residual direction
        keep = max(1, min(size - 1, m // 2))
        kept = S[:, :keep].T @ V[:size]
        residual_vec = V[size].copy()
        V[:] = 0.0
        T[:] = 0.0
        V[:keep] = kept
        T[:keep, :keep] = np.diag(theta[:keep])
        if beta == 0.0:
            # invariant subspace without convergence: restart from a fresh direction
            residual_vec = deflate(np.random.default_rng(nmv).standard_normal(n))
            residual_vec -= V[:keep].T @ (V[:keep] @ residual_vec)
            residual_vec /= np.linalg.norm(residual_vec)
        V[keep] = residual_vec
        start = keep


def dense_solve(H: SparseHamiltonian) -> GroundStateSolution:
    mat = H.to_dense()
    vals, vecs = scipy.linalg.eigh(mat, subset_by_index=[0, min(1, H.dim - 1)])
    psi = _fix_sign(vecs[:, 0])
    e1 = float(vals[1]) if len(vals) > 1 else np.inf
    resid = float(np.linalg.norm(H.apply(psi) - vals[0] * psi))
    return GroundStateSolution(float(vals[0]), e1, psi, "dense", resid)


def lanczos_solve(
    H: SparseHamiltonian,
    tol: float = 1e-10,
    max_iter: int = 4000,
    seed: int = 0,
    krylov_dim: int = 60,
) -> GroundStateSolution:
    rng = np.random.default_rng(seed)
    e0, psi, resid, used = lanczos_lowest(H.apply, rng.standard_normal(H.dim), tol, max_iter, krylov_dim)
    log.info("ground state: E0=%.12f after %d matvecs (residual %.2e)", e0, used, resid)
    psi = _fix_sign(psi)
    e1, _, _, used1 = lanczos_lowest(
        H.apply, rng.standard_normal(H.dim), tol, max_iter - used, krylov_dim, locked=psi[None, :]
    )
    log.info("first excitation: E1=%.12f after %d matvecs", e1, used1)
    return GroundStateSolution(e0, e1, psi, "lanczos", resid)


def ground_state(
    H: SparseHamiltonian,
    tol: float = 1e-10,
    max_iter: int = 4000,
    *,
    method: str = "auto",
    seed: int = 0,
    krylov_dim: int = 60,
) -> GroundStateSolution:
    """Two lowest energies and the normalised ground-state vector.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    ``DENSE_AUTO_LIMIT`` basis states). The global sign is fixed so the
    amplitude of ``|00, ..., 00>`` is non-negative.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "auto":
        method = "dense" if H.dim <= DENSE_AUTO_LIMIT else "lanczos"
    if method == "dense":
        sol = dense_solve(H)
    elif method == "lanczos":
        sol = lanczos_solve(H, tol, max_iter, seed, krylov_dim)
    else:
        raise ValueError(f"unknown method {method!r}")
    if sol.residual > max(tol, 1e-9):
        raise ConvergenceError("ground state residual above tolerance", sol.residual)
    if sol.gap < GAP_FLOOR:
        raise DegenerateGroundStateError(f"ground state is degenerate (gap {sol.gap:.3e})")
    return dataclasses.replace(sol, space=H.space, R=H.R)


def amplitude_ratio(solution: GroundStateSolution) -> float:
    """Weight of ``|00, ..., 00>`` relative to the weight of all other states."""
    p = solution.amplitudes**2
    rest = float(p[1:].sum())
    if rest < 1e-300:
        warnings.warn("ground state is a pure product state; ratio is infinite", RuntimeWarning)
        return np.inf
    return float(p[0]) / rest


def full_spectrum(H: SparseHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of a small operator (ascending)."""
    return np.linalg.eigh(H.to_dense())
