"""Monte Carlo observables of the sign-free RBM wavefunction ``sqrt(p_lambda)``.

Samples may be given as ``(G, N)`` label arrays or ``(G, N, D)`` one-hot
tensors. Every estimator also accepts ``weights``: with the full basis as
"samples" and ``p_lambda`` as weights it reproduces the exact expectation value,
which is how the sampling estimators are validated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import ell_of, one_hot, symmetry_numbers
from .hamiltonian import SparseHamiltonian
from .rbm import Evaluation, GibbsChainState, RbmParameters, effective_energy, gibbs_sample


def _labels(samples) -> np.ndarray:
    samples = np.asarray(samples)
    if samples.ndim == 3:
        samples = np.argmax(samples, axis=-1)
    if samples.ndim != 2 or len(samples) == 0:
        raise ValueError("need a non-empty (count, N) batch of samples")
    return samples.astype(np.int64)


def _mean_and_error(values: np.ndarray, weights: np.ndarray | None) -> tuple[float, float]:
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        return float(w @ values / w.sum()), 0.0
    if len(values) < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


def local_kinetic(samples) -> np.ndarray:
    ell = ell_of(_labels(samples))
    return (ell * (ell + 1)).sum(axis=-1).astype(np.float64)


def local_potential(params: RbmParameters, samples, H: SparseHamiltonian) -> np.ndarray:
    """``sum_s' [psi(s') / psi(s)] V_{s s'}`` per sample, without ``1/R**3``.

    Only configurations connected by ``V`` are visited and the amplitude ratio
    is ``exp((F(s) - F(s')) / 2)``, so ``Z`` is never needed.
    """
    labels = _labels(samples)
    d = params.local_dim
    owner, new, vals = H.connected_batch(labels)
    if len(vals) == 0:
        return np.zeros(len(labels))
    f_old = effective_energy(params, one_hot(labels, d))
    f_new = np.empty(len(new))
    chunk = 200_000
    for lo in range(0, len(new), chunk):
        f_new[lo : lo + chunk] = effective_energy(params, one_hot(new[lo : lo + chunk], d))
    ratio = np.exp(0.5 * (f_old[owner] - f_new))
    return np.bincount(owner, weights=ratio * vals, minlength=len(labels))


def kinetic_estimator(samples, weights=None) -> tuple[float, float]:
    """Mean and standard error of ``sum_i l_i (l_i + 1)``."""
    return _mean_and_error(local_kinetic(samples), weights)


def potential_estimator(params: RbmParameters, samples, H: SparseHamiltonian, weights=None) -> tuple[float, float]:
    return _mean_and_error(local_potential(params, samples, H), weights)


@dataclass(frozen=True, eq=False)
class EnergyEstimate:
    kinetic: float
    potential: float
    total: float
    std_error: float
    n_samples: int
    local_energies: np.ndarray = field(repr=False)


def energy_rbm(params: RbmParameters, samples, H: SparseHamiltonian, weights=None) -> EnergyEstimate:
    """``E_RBM = <K> + <V> / R**3``; ``potential`` is reported without the ``1/R**3``."""
    kin = local_kinetic(samples)
    pot = local_potential(params, samples, H)
    local = kin + H.inv_r3 * pot
    k_mean, _ = _mean_and_error(kin, weights)
    v_mean, _ = _mean_and_error(pot, weights)
    total, err = _mean_and_error(local, weights)
    return EnergyEstimate(k_mean, v_mean, total, err, len(local), local)


def delta(e_rbm: float, e_exact: float, gap: float) -> float:
    """``|E_RBM - E_exact| / gap``."""
    if not gap > 0:
        raise ValueError(f"gap must be positive, got {gap}")
    return abs(e_rbm - e_exact) / gap


@dataclass(frozen=True, eq=False)
class SymmetrySplit:
    fraction: float
    symmetric: np.ndarray
    violating: np.ndarray


def symmetry_violation_fraction(samples) -> SymmetrySplit:
    """Fraction of samples with total ``m != 0`` or odd total ``l``."""
    labels = _labels(samples)
    total_m, parity = symmetry_numbers(labels)
    bad = (total_m != 0) | (parity != 0)
    return SymmetrySplit(float(bad.mean()), labels[~bad], labels[bad])


def contamination_proxy(psi: np.ndarray, energies: np.ndarray, vectors: np.ndarray) -> tuple[float, float]:
    """``((E_psi - E_0) / gap, |<1|psi>|**2)`` from a full eigendecomposition.

    ``energies`` ascending and ``vectors`` as columns, as returned by ``eigh``.
    """
    gap = energies[1] - energies[0]
    if gap < 1e-10:
        raise ValueError("degenerate ground state: the proxy is undefined")
    c = vectors.T @ psi
    e_psi = float(np.sum(c**2 * energies) / np.sum(c**2))
    return (e_psi - energies[0]) / gap, float(c[1] ** 2)


@dataclass
class EnergyEvaluator:
    """Training callback: sample from the RBM and score ``delta``.

    Chains start in the all-zero configuration; evaluation at epoch ``e`` uses
    seed ``(seed, e)`` so results do not depend on how often it is called.
    """

    H: SparseHamiltonian
    e_exact: float
    gap: float
    n_samples: int = 10_000
    gibbs_steps: int = 1_000
    seed: int = 0

    def sample(self, params: RbmParameters, epoch: int) -> np.ndarray:
        start = GibbsChainState.all_zero(params.n_sites, params.local_dim)
        seed = int(np.random.SeedSequence([self.seed, epoch]).generate_state(1)[0])
        return gibbs_sample(params, start, self.gibbs_steps, self.n_samples, seed)

    def __call__(self, params: RbmParameters, epoch: int) -> Evaluation:
        est = energy_rbm(params, self.sample(params, epoch), self.H)
        return Evaluation(
            delta(est.total, self.e_exact, self.gap), est.std_error / self.gap, est.kinetic, est.potential
        )
