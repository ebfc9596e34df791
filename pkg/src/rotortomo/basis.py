"""Truncated product Hilbert space of N rigid rotors.

Single-rotor states ``|l m>`` are flattened to ``sigma = l*l + l + m`` so that
``l`` is recoverable as ``floor(sqrt(sigma))``. Many-rotor configurations are
arrays of such labels; the global index is the mixed-radix number with site 0
as the most significant digit. This ordering is used by every module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class RotorLabel(NamedTuple):
    ell: int
    m: int
    sigma: int


def local_dim(ell_max: int) -> int:
    """Number of single-rotor states with ``l <= ell_max``."""
    if ell_max < 0:
        raise ValueError(f"ell_max must be non-negative, got {ell_max}")
    return (ell_max + 1) ** 2


def label_encode(ell: int, m: int, ell_max: int | None = None) -> int:
    if ell < 0 or abs(m) > ell:
        raise ValueError(f"invalid rotor state (l={ell}, m={m})")
    if ell_max is not None and ell > ell_max:
        raise ValueError(f"l={ell} exceeds ell_max={ell_max}")
    return ell * ell + ell + m


def label_decode(sigma: int) -> tuple[int, int]:
    if sigma < 0:
        raise ValueError(f"label must be non-negative, got {sigma}")
    ell = math.isqrt(sigma)
    return ell, sigma - ell * ell - ell


def rotor_label(ell: int, m: int) -> RotorLabel:
    return RotorLabel(ell, m, label_encode(ell, m))


def ell_of(sigma) -> np.ndarray:
    """Vectorised ``l`` of flattened labels."""
    sigma = np.asarray(sigma, dtype=np.int64)
    ell = np.floor(np.sqrt(sigma)).astype(np.int64)
    # guard against sqrt rounding for perfect squares
    ell -= (ell * ell > sigma)
    ell += ((ell + 1) * (ell + 1) <= sigma)
    return ell


def m_of(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.int64)
    ell = ell_of(sigma)
    return sigma - ell * ell - ell


def symmetry_numbers(config: Sequence[int] | np.ndarray) -> tuple:
    """Total ``m`` and total ``l`` parity of one or many configurations.

    ``config`` holds flattened labels with sites on the last axis. For a single
    configuration two ints are returned; for a batch, two integer arrays.
    """
    config = np.asarray(config, dtype=np.int64)
    total_m = m_of(config).sum(axis=-1)
    parity = ell_of(config).sum(axis=-1) % 2
    if config.ndim == 1:
        return int(total_m), int(parity)
    return total_m, parity


def one_hot(config, dim: int) -> np.ndarray:
    """One-hot encode labels: ``(..., N) -> (..., N, dim)`` float array."""
    config = np.asarray(config, dtype=np.int64)
    if config.size and (config.min() < 0 or config.max() >= dim):
        raise ValueError(f"labels must lie in [0, {dim})")
    return (config[..., None] == np.arange(dim)).astype(np.float64)


def from_one_hot(sigma: np.ndarray) -> np.ndarray:
    """Inverse of :func:`one_hot`; rows must be exactly one-hot."""
    sigma = np.asarray(sigma)
    if not np.all(sigma.sum(axis=-1) == 1):
        raise ValueError("every site must carry exactly one active unit")
    return np.argmax(sigma, axis=-1).astype(np.int64)


@dataclass(frozen=True)
class HilbertSpace:
    n_sites: int
    ell_max: int

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be positive, got {self.n_sites}")
        local_dim(self.ell_max)

    @property
    def local_dim(self) -> int:
        return local_dim(self.ell_max)

    @property
    def total_dim(self) -> int:
        return self.local_dim ** self.n_sites

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.local_dim,) * self.n_sites

    def local_ells(self) -> np.ndarray:
        return ell_of(np.arange(self.local_dim))

    def local_ms(self) -> np.ndarray:
        return m_of(np.arange(self.local_dim))

    def check_config(self, config) -> np.ndarray:
        config = np.asarray(config, dtype=np.int64)
        if config.shape[-1:] != (self.n_sites,):
            raise ValueError(f"expected {self.n_sites} sites, got shape {config.shape}")
        if config.size and (config.min() < 0 or config.max() >= self.local_dim):
            raise ValueError(f"labels must lie in [0, {self.local_dim})")
        return config

    def index(self, config) -> np.ndarray | int:
        """Global mixed-radix index; site 0 is the most significant digit."""
        config = self.check_config(config)
        idx = np.ravel_multi_index(tuple(np.moveaxis(config, -1, 0)), self.shape)
        return int(idx) if config.ndim == 1 else idx

    def config(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        if np.any(index < 0) or np.any(index >= self.total_dim):
            raise ValueError("index out of range")
        return np.stack(np.unravel_index(index, self.shape), axis=-1).astype(np.int64)

    def all_configs(self) -> np.ndarray:
        """Every configuration in index order, shape ``(total_dim, N)``."""
        return self.config(np.arange(self.total_dim))

    def kinetic_diag(self) -> np.ndarray:
        """``sum_i l_i (l_i + 1)`` for every basis state, in index order."""
        ells = self.local_ells()
        site = (ells * (ells + 1)).astype(np.float64)
        out = np.zeros(self.shape)
        for i in range(self.n_sites):
            shape = [1] * self.n_sites
            shape[i] = self.local_dim
            out = out + site.reshape(shape)
        return out.ravel()

    def sector_numbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Total ``m`` and ``l`` parity for every basis state, in index order."""
        ms, ells = self.local_ms(), self.local_ells()
        tm = np.zeros(self.shape, dtype=np.int64)
        tl = np.zeros(self.shape, dtype=np.int64)
        for i in range(self.n_sites):
            shape = [1] * self.n_sites
            shape[i] = self.local_dim
            tm = tm + ms.reshape(shape)
            tl = tl + ells.reshape(shape)
        return tm.ravel(), (tl % 2).ravel()

    def sector_mask(self, total_m: int = 0, parity: int = 0) -> np.ndarray:
        tm, lp = self.sector_numbers()
        return (tm == total_m) & (lp == parity)
