"""Dimensionless dipolar rotor chain Hamiltonian ``H/B = K + V / R**3``.

``K`` is diagonal, ``sum_i l_i (l_i + 1)``. ``V`` couples every pair of sites
(open chain, unit spacing) through

    V_ij = [ (p+_i p-_j + p-_i p+_j) / 2 - 2 z_i z_j ] / |i - j|**3

with ``p+- = x +- i y`` the spherical components of the rotor axis unit vector.
All matrix elements are real, so the operator is real symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import HilbertSpace, ell_of, m_of

DENSE_LIMIT = 20_000


@dataclass(frozen=True)
class SingleRotorOperators:
    """Matrices of the rotor axis components in the ``|l m>`` basis."""

    z_mat: np.ndarray
    p_plus: np.ndarray

    @property
    def p_minus(self) -> np.ndarray:
        return self.p_plus.T

    @property
    def dim(self) -> int:
        return self.z_mat.shape[0]


def build_single_rotor_ops(ell_max: int) -> SingleRotorOperators:
    """Closed-form dipole selection-rule matrix elements (Condon-Shortley)."""
    if ell_max < 0:
        raise ValueError(f"ell_max must be non-negative, got {ell_max}")
    dim = (ell_max + 1) ** 2
    z = np.zeros((dim, dim))
    pp = np.zeros((dim, dim))
    for s in range(dim):
        l, m = int(ell_of(s)), int(m_of(s))
        if l + 1 > ell_max:
            continue
        up = (l + 1) ** 2 + (l + 1)
        # <l+1 m|cos(theta)|l m>
        val = np.sqrt(((l + 1) ** 2 - m * m) / ((2 * l + 1) * (2 * l + 3)))
        z[up + m, s] = z[s, up + m] = val
        # <l+1 m+1|sin(theta) e^{i phi}|l m>
        pp[up + m + 1, s] = -np.sqrt((l + m + 1) * (l + m + 2) / ((2 * l + 1) * (2 * l + 3)))
        # <l m|sin(theta) e^{i phi}|l+1 m-1>, the lowering partner of the line above
        mm = m - 1
        if abs(mm) <= l + 1:
            lp = l + 1
            pp[s, up + mm] = np.sqrt((lp - mm) * (lp - mm - 1) / ((2 * lp - 1) * (2 * lp + 1)))
    return SingleRotorOperators(z, pp)


def pair_operator(ops: SingleRotorOperators) -> np.ndarray:
    """Two-rotor coupling ``(p+ p- + p- p+)/2 - 2 z z`` as a ``(D, D, D, D)`` tensor.

    Index order is ``[a, b, s, t]`` for ``<a b|v|s t>``.
    """
    z, pp, pm = ops.z_mat, ops.p_plus, ops.p_minus
    return (
        0.5 * (np.einsum("as,bt->abst", pp, pm) + np.einsum("as,bt->abst", pm, pp))
        - 2.0 * np.einsum("as,bt->abst", z, z)
    )


@dataclass(frozen=True)
class PairTransitions:
    """CSR-like table of nonzero pair transitions ``(s, t) -> (a, b)``.

    Entries for the local pair state ``s * D + t`` live in
    ``targets[ptr[k]:ptr[k + 1]]`` (flattened ``a * D + b``) with matching
    ``values``.
    """

    ptr: np.ndarray
    targets: np.ndarray
    values: np.ndarray


def _pair_transitions(ops: SingleRotorOperators, cutoff: float = 1e-14) -> PairTransitions:
    dim = ops.dim
    g = pair_operator(ops).reshape(dim * dim, dim * dim)
    cols = g.T  # row k of cols lists <target|v|k>
    nz = np.abs(cols) > cutoff
    ptr = np.concatenate([[0], np.cumsum(nz.sum(axis=1))]).astype(np.int64)
    src, tgt = np.nonzero(nz)
    return PairTransitions(ptr, tgt.astype(np.int64), cols[src, tgt])


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Matrix-free ``K + V / R**3`` on a :class:`HilbertSpace`.

    ``R = inf`` is accepted and yields the kinetic-only operator.
    """

    space: HilbertSpace
    R: float
    ops: SingleRotorOperators = field(repr=False)

    @property
    def inv_r3(self) -> float:
        return 0.0 if np.isinf(self.R) else 1.0 / self.R**3

    @property
    def dim(self) -> int:
        return self.space.total_dim

    @cached_property
    def kinetic_diag(self) -> np.ndarray:
        return self.space.kinetic_diag()

    @cached_property
    def couplings(self) -> np.ndarray:
        """``1/|i-j|**3`` for ``i < j``; zero elsewhere."""
        n = self.space.n_sites
        c = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                c[i, j] = 1.0 / (j - i) ** 3
        return c

    @cached_property
    def transitions(self) -> PairTransitions:
        return _pair_transitions(self.ops)

    # -- matrix-free application -------------------------------------------

    def _site_apply(self, op: np.ndarray, psi: np.ndarray, site: int) -> np.ndarray:
        d = self.space.local_dim
        left = d**site
        # trailing block columns ride along with the right-hand sites
        right = psi.size // (left * d)
        t = psi.reshape(left, d, right)
        if right == 1:
            return (t[:, :, 0] @ op.T).reshape(psi.shape)
        if left == 1:
            return (op @ t[0]).reshape(psi.shape)
        return np.matmul(op, t).reshape(psi.shape)

    def apply_potential(self, v: np.ndarray) -> np.ndarray:
        """``V v`` without the global ``1/R**3`` factor.

        Pairs are accumulated in a fixed order (sites ascending), so repeated
        calls on the same input are bitwise identical.
        """
        v = self._check(v)
        n = self.space.n_sites
        out = np.zeros_like(v)
        if n < 2:
            return out
        ops = self.ops
        # (left-site operator, right-site operator, weight)
        terms = ((ops.z_mat, ops.z_mat, -2.0), (ops.p_plus, ops.p_minus, 0.5), (ops.p_minus, ops.p_plus, 0.5))
        c = self.couplings
        for a_op, b_op, weight in terms:
            right = [None] + [self._site_apply(b_op, v, j) for j in range(1, n)]
            for i in range(n - 1):
                acc = c[i, i + 1] * right[i + 1]
                for j in range(i + 2, n):
                    acc = acc + c[i, j] * right[j]
                out += weight * self._site_apply(a_op, acc, i)
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``H v`` for a real vector (or a ``(dim, k)`` block of vectors)."""
        v = self._check(v)
        diag = self.kinetic_diag if v.ndim == 1 else self.kinetic_diag[:, None]
        out = diag * v
        if self.inv_r3 != 0.0:
            out += self.inv_r3 * self.apply_potential(v)
        return out

    __matmul__ = apply

    def expectation(self, v: np.ndarray) -> float:
        return float(v @ self.apply(v))

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.dim or v.ndim > 2:
            raise ValueError(f"vector of length {self.dim} expected, got shape {v.shape}")
        return v

    # -- sparse rows --------------------------------------------------------

    def connected_batch(self, configs: np.ndarray):
        """All nonzero off-diagonal ``V`` elements for a batch of configurations.

        Returns ``(owner, new_configs, values)`` where ``owner[k]`` indexes the
        source configuration, ``new_configs[k]`` is the connected configuration
        and ``values[k]`` is ``<sigma|V|sigma'>`` including ``1/|i-j|**3`` but
        not ``1/R**3``.
        """
        configs = self.space.check_config(configs)
        single = configs.ndim == 1
        configs = np.atleast_2d(configs)
        n, d = self.space.n_sites, self.space.local_dim
        tr = self.transitions
        owners, news, vals = [], [], []
        for i in range(n):
            for j in range(i + 1, n):
                k = configs[:, i] * d + configs[:, j]
                counts = tr.ptr[k + 1] - tr.ptr[k]
                total = int(counts.sum())
                if total == 0:
                    continue
                owner = np.repeat(np.arange(len(configs)), counts)
                offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
                pos = tr.ptr[k][owner] + offs
                new = configs[owner].copy()
                new[:, i], new[:, j] = np.divmod(tr.targets[pos], d)
                owners.append(owner)
                news.append(new)
                vals.append(self.couplings[i, j] * tr.values[pos])
        if not owners:
            return (np.zeros(0, np.int64), np.zeros((0, n), np.int64), np.zeros(0))
        owner = np.concatenate(owners)
        new = np.concatenate(news)
        val = np.concatenate(vals)
        order = np.argsort(owner, kind="stable")
        if single:
            order = np.arange(len(owner))
        return owner[order], new[order], val[order]

    def connected_configs(self, config) -> list[tuple[tuple[int, ...], float]]:
        """Configurations reached from ``config`` by one ``V`` term, with elements."""
        _, new, val = self.connected_batch(np.asarray(config, dtype=np.int64))
        return [(tuple(int(x) for x in row), float(v)) for row, v in zip(new, val)]

    # -- dense realisation (test oracle / small spaces only) ---------------

    def to_dense(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        """Dense matrix built column by column from the matrix-free apply."""
        if self.dim > limit:
            raise ValueError(f"refusing to densify a {self.dim}-dimensional operator")
        out = np.empty((self.dim, self.dim))
        step = 256
        for start in range(0, self.dim, step):
            stop = min(start + step, self.dim)
            block = np.zeros((self.dim, stop - start))
            block[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[:, start:stop] = self.apply(block)
        return out


def build_hamiltonian(space: HilbertSpace, R: float) -> SparseHamiltonian:
    if not R > 0:
        raise ValueError(f"separation R must be positive, got {R}")
    return SparseHamiltonian(space, float(R), build_single_rotor_ops(space.ell_max))
