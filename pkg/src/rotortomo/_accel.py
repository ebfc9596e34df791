"""Optional compiled kernels for block Gibbs sampling.

If numba is importable, :func:`rotortomo.rbm.gibbs_steps_labels` hands its
inner loop to :func:`gibbs_cdf` or :func:`gibbs_alias`. The kernels read the
same uniform variates as the numpy code in the same order, so both agree
except where rounding flips a comparison. CD-k updates run many short steps on small
batches, where numpy spends its time in call overhead.
"""
from __future__ import annotations

import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _gibbs_cdf(W, b, c, labels, u):
    """``len(u)`` Gibbs steps; ``u[t, g]`` holds the ``n_h + N`` uniforms of step ``t`` for chain ``g``.

    The per-site cumulative weights depend only on the hidden state, so for
    small ``n_h`` they are computed once per state seen in this call.
    """
    n, nh, d = W.shape
    batch = labels.shape[0]
    lab = labels.copy()
    cached = nh <= 12
    slots = 1 << nh if cached else 1
    cdf = np.empty((slots, n, d))
    ready = np.zeros(slots, dtype=np.bool_)
    h = np.empty(nh)
    for t in range(u.shape[0]):
        for g in range(batch):
            key = 0
            for j in range(nh):
                x = c[j]
                for i in range(n):
                    x += W[i, j, lab[g, i]]
                h[j] = 1.0 if u[t, g, j] < 1.0 / (1.0 + math.exp(-x)) else 0.0
                if h[j] != 0.0:
                    key += 1 << j
            slot = key if cached else 0
            if not (cached and ready[slot]):
                for i in range(n):
                    top = -np.inf
                    for e in range(d):
                        s = b[i, e]
                        for j in range(nh):
                            if h[j] != 0.0:
                                s += W[i, j, e]
                        cdf[slot, i, e] = s
                        if s > top:
                            top = s
                    total = 0.0
                    for e in range(d):
                        total += math.exp(cdf[slot, i, e] - top)
                        cdf[slot, i, e] = total
                ready[slot] = True
            for i in range(n):
                x = u[t, g, nh + i] * cdf[slot, i, d - 1]
                r = 0
                while r < d - 1 and x > cdf[slot, i, r]:
                    r += 1
                lab[g, i] = r
    return lab


def _gibbs_alias(W, c, accept, alias, labels, u):
    """As :func:`_gibbs_cdf`, drawing sites from per-hidden-state alias tables.

    ``h_j = 1`` when ``u < 1 / (1 + exp(-theta_j))``, tested as
    ``u * (1 + exp(-theta_j)) < 1`` with ``exp(-theta_j)`` built as a product
    of tabulated factors instead of one exponential per unit.
    """
    n, nh, d = W.shape
    batch = labels.shape[0]
    lab = labels.copy()
    ew = np.exp(-W)
    ec = np.exp(-c)
    for t in range(u.shape[0]):
        for g in range(batch):
            key = 0
            for j in range(nh):
                x = ec[j]
                for i in range(n):
                    x *= ew[i, j, lab[g, i]]
                if u[t, g, j] * (1.0 + x) < 1.0:
                    key += 1 << j
            for i in range(n):
                v = u[t, g, nh + i] * d
                col = int(v)
                flat = key * n * d + i * d + col
                lab[g, i] = col if v - col < accept[flat] else alias[flat]
    return lab


if numba is not None:
    gibbs_cdf = numba.njit(cache=True, nogil=True)(_gibbs_cdf)
    gibbs_alias = numba.njit(cache=True, nogil=True)(_gibbs_alias)
else:  # pragma: no cover
    gibbs_cdf = gibbs_alias = None
