"""Multinomial restricted Boltzmann machine over one-hot rotor labels.

Visible units form an ``(N, D)`` one-hot tensor ``sigma`` (one active unit per
site), hidden units are ``n_h`` binary variables. The joint energy is

    E(sigma, h) = -sum_ijd W_ijd h_j sigma_id - sum_id b_id sigma_id - sum_j c_j h_j

and summing out ``h`` gives the effective (free) energy

    F(sigma) = -sum_id b_id sigma_id - sum_j softplus(c_j + sum_id W_ijd sigma_id)

so that ``p(sigma) = exp(-F(sigma)) / Z``. Training minimises the KL
divergence to the data with contrastive divergence (CD-k).
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit, logsumexp, softmax

from . import _accel
from .basis import HilbertSpace, from_one_hot, one_hot

log = logging.getLogger(__name__)

CHAIN_BLOCK = 4096
# uniforms handed to the compiled kernel per call
JIT_UNIFORMS = 1 << 20
ENUMERATION_LIMIT = 1_000_000


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RbmParameters:
    """Weights ``W[N, n_h, D]``, visible biases ``b[N, D]``, hidden biases ``c[n_h]``."""

    W: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        n, nh, d = self.W.shape
        if self.b.shape != (n, d) or self.c.shape != (nh,):
            raise ValueError(f"inconsistent shapes W{self.W.shape} b{self.b.shape} c{self.c.shape}")
        if not self.is_finite():
            raise ValueError("parameters must be finite")

    @property
    def n_sites(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    @property
    def local_dim(self) -> int:
        return self.W.shape[2]

    @classmethod
    def zeros(cls, n_sites: int, n_hidden: int, local_dim: int) -> "RbmParameters":
        return cls(np.zeros((n_sites, n_hidden, local_dim)), np.zeros((n_sites, local_dim)), np.zeros(n_hidden))

    @classmethod
    def initialize(cls, n_sites, n_hidden, local_dim, seed: int, scale: float = 0.01) -> "RbmParameters":
        """``W ~ Normal(0, scale**2)``, zero biases."""
        rng = np.random.default_rng(seed)
        p = cls.zeros(n_sites, n_hidden, local_dim)
        p.W = rng.normal(0.0, scale, size=p.W.shape)
        return p

    def copy(self) -> "RbmParameters":
        return RbmParameters(self.W.copy(), self.b.copy(), self.c.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b.ravel(), self.c.ravel()])

    def from_vector(self, vec: np.ndarray) -> "RbmParameters":
        """Parameters shaped like ``self`` holding the entries of ``vec``."""
        nw, nb = self.W.size, self.b.size
        return RbmParameters(
            vec[:nw].reshape(self.W.shape), vec[nw : nw + nb].reshape(self.b.shape), vec[nw + nb :].copy()
        )

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.W).all() and np.isfinite(self.b).all() and np.isfinite(self.c).all())

    def __sub__(self, other: "RbmParameters") -> "RbmParameters":
        return RbmParameters(self.W - other.W, self.b - other.b, self.c - other.c)

    def __add__(self, other: "RbmParameters") -> "RbmParameters":
        return RbmParameters(self.W + other.W, self.b + other.b, self.c + other.c)

    def __mul__(self, scalar: float) -> "RbmParameters":
        return RbmParameters(self.W * scalar, self.b * scalar, self.c * scalar)

    __rmul__ = __mul__


def _flat_weights(params: RbmParameters) -> np.ndarray:
    """``W`` as an ``(N*D, n_h)`` matrix matching flattened one-hot rows."""
    return params.W.transpose(0, 2, 1).reshape(-1, params.n_hidden)


def _check_visible(params: RbmParameters, sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape[-2:] != (params.n_sites, params.local_dim):
        raise ValueError(f"visible tensor must end in {(params.n_sites, params.local_dim)}, got {sigma.shape}")
    return sigma


# ---------------------------------------------------------------------------
# energies and conditionals
# ---------------------------------------------------------------------------


def hidden_field(params: RbmParameters, sigma) -> np.ndarray:
    """``c_j + sum_id W_ijd sigma_id`` for one-hot ``sigma`` of shape ``(..., N, D)``."""
    sigma = _check_visible(params, sigma)
    flat = sigma.reshape(*sigma.shape[:-2], -1)
    return params.c + flat @ _flat_weights(params)


def effective_energy(params: RbmParameters, sigma) -> np.ndarray | float:
    sigma = _check_visible(params, sigma)
    visible = np.einsum("...id,id->...", sigma, params.b)
    out = -visible - np.logaddexp(0.0, hidden_field(params, sigma)).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def joint_energy(params: RbmParameters, sigma, h) -> np.ndarray | float:
    sigma = _check_visible(params, sigma)
    h = np.asarray(h, dtype=np.float64)
    coupling = np.einsum("...id,ijd,...j->...", sigma, params.W, h)
    out = -coupling - np.einsum("...id,id->...", sigma, params.b) - h @ params.c
    return float(out) if np.ndim(out) == 0 else out


def unnormalized_psi(params: RbmParameters, sigma):
    """``exp(-F(sigma) / 2)``, the RBM amplitude up to ``sqrt(Z)``."""
    return np.exp(-0.5 * effective_energy(params, sigma))


def conditional_hidden(params: RbmParameters, sigma) -> np.ndarray:
    """``p(h_j = 1 | sigma)``."""
    return expit(hidden_field(params, sigma))


def visible_logits(params: RbmParameters, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    field = (h @ params.W.transpose(1, 0, 2).reshape(params.n_hidden, -1)).reshape(
        *h.shape[:-1], params.n_sites, params.local_dim
    )
    return params.b + field


def conditional_visible(params: RbmParameters, h) -> np.ndarray:
    """Per-site categorical ``p(sigma_i = d | h)``, shape ``(..., N, D)``."""
    return softmax(visible_logits(params, h), axis=-1)


# ---------------------------------------------------------------------------
# block Gibbs sampling
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GibbsChainState:
    visible: np.ndarray
    hidden: np.ndarray | None = None
    steps_taken: int = 0

    @classmethod
    def all_zero(cls, n_sites: int, local_dim: int) -> "GibbsChainState":
        """Every rotor in ``|0 0>`` (label 0)."""
        return cls(one_hot(np.zeros(n_sites, dtype=np.int64), local_dim))


def sample_hidden(params: RbmParameters, sigma, rng: np.random.Generator) -> np.ndarray:
    p = conditional_hidden(params, sigma)
    return (rng.random(p.shape) < p).astype(np.float64)


def sample_visible_labels(params: RbmParameters, h, rng: np.random.Generator) -> np.ndarray:
    probs = conditional_visible(params, h)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    labels = (u > cdf).sum(axis=-1)
    return np.minimum(labels, params.local_dim - 1)


def sample_visible(params: RbmParameters, h, rng: np.random.Generator) -> np.ndarray:
    return one_hot(sample_visible_labels(params, h, rng), params.local_dim)


def gibbs_steps(params: RbmParameters, sigma: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Run ``k`` alternations (hidden then visible) on a batch of one-hot states."""
    labels = gibbs_steps_labels(params, np.argmax(sigma, axis=-1), k, rng)
    return one_hot(labels, params.local_dim)


def gibbs_steps_labels(params: RbmParameters, labels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Label-space version of :func:`gibbs_steps` for ``(B, N)`` integer arrays.

    Every step consumes one ``(B, n_h + N)`` block of uniforms: the first
    ``n_h`` columns draw the hidden layer, the rest one label per site. When
    ``2**n_h`` is small next to the amount of sampling work, the visible
    conditionals of every hidden state are tabulated once as alias tables;
    otherwise the per-site cumulative distribution is inverted directly, in
    compiled code when numba is available.
    """
    n, nh, d = params.W.shape
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    batch = labels.shape[0]
    use_table = nh <= 12 and 2**nh * n * d <= batch * k
    if use_table:
        hidden_states = ((np.arange(2**nh)[:, None] >> np.arange(nh)) & 1).astype(np.float64)
        accept, alias = _alias_tables(conditional_visible(params, hidden_states).reshape(-1, d))
    kernel = _accel.gibbs_alias if use_table else _accel.gibbs_cdf
    if kernel is not None:
        args = (params.W, params.c, accept, alias) if use_table else (params.W, params.b, params.c)
        # the stream is the same whether the uniforms come in one block or per step
        chunk = max(1, JIT_UNIFORMS // (batch * (nh + n)))
        for lo in range(0, k, chunk):
            labels = kernel(*args, labels, rng.random((min(chunk, k - lo), batch, nh + n)))
        return labels
    w_site = np.ascontiguousarray(params.W.transpose(0, 2, 1))  # (N, D, n_h)
    w_hidden = params.W.transpose(1, 0, 2).reshape(nh, n * d)
    b_flat = params.b.ravel()
    if use_table:
        bits = 1 << np.arange(nh)
        rows = np.arange(n) * d
    for _ in range(k):
        theta = params.c + w_site[0].take(labels[:, 0], axis=0)
        for i in range(1, n):
            theta += w_site[i].take(labels[:, i], axis=0)
        u = rng.random((batch, nh + n))
        h = u[:, :nh] < expit(theta)
        if use_table:
            uv = u[:, nh:] * d
            col = uv.astype(np.int64)
            flat = (h @ bits)[:, None] * (n * d) + rows + col
            labels = np.where(uv - col < accept.take(flat), col, alias.take(flat))
        else:
            # softmax left unnormalised: the uniform is scaled by the row total
            logits = (h @ w_hidden + b_flat).reshape(batch, n, d)
            cdf = np.cumsum(np.exp(logits - logits.max(axis=-1, keepdims=True)), axis=-1)
            uv = u[:, nh:, None] * cdf[..., -1:]
            labels = np.minimum((uv > cdf).sum(axis=-1), d - 1)
    return labels


def _alias_tables(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walker alias tables (Vose's construction) for each row of ``probs``.

    Returns flattened ``accept`` thresholds and ``alias`` labels: a draw picks
    column ``c`` uniformly and keeps it with probability ``accept[c]``,
    otherwise it takes ``alias[c]``.
    """
    rows, d = probs.shape
    accept = np.ones((rows, d))
    alias = np.tile(np.arange(d), (rows, 1))
    for r in range(rows):
        scaled = probs[r] * (d / probs[r].sum())
        small = [i for i in range(d) if scaled[i] < 1.0]
        large = [i for i in range(d) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            accept[r, s] = scaled[s]
            alias[r, s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            accept[r, i] = 1.0
    return accept.ravel(), alias.ravel()


def gibbs_sample(
    params: RbmParameters,
    start: GibbsChainState | np.ndarray,
    k: int,
    count: int,
    seed: int,
    block: int = CHAIN_BLOCK,
) -> np.ndarray:
    """Final visible states of ``count`` independent chains after ``k`` steps.

    Every chain starts from ``start``. Chains are processed in blocks of
    ``block``; block ``q`` draws from ``default_rng([seed, q])`` so a chain's
    output depends only on ``seed`` and its index, whatever order blocks run in.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    visible = start.visible if isinstance(start, GibbsChainState) else start
    visible = _check_visible(params, visible)
    out = np.empty((count, params.n_sites, params.local_dim))
    for q, lo in enumerate(range(0, count, block)):
        hi = min(lo + block, count)
        out[lo:hi] = gibbs_block(params, visible, k, hi - lo, seed, q)
    return out


def gibbs_block(params: RbmParameters, visible: np.ndarray, k: int, size: int, seed: int, block_index: int):
    rng = np.random.default_rng([seed, block_index])
    labels = np.broadcast_to(np.argmax(visible, axis=-1), (size, params.n_sites))
    return one_hot(gibbs_steps_labels(params, labels, k, rng), params.local_dim)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _energy_gradient_arrays(params: RbmParameters, sigma: np.ndarray, weights: np.ndarray | None):
    n, nh, d = params.W.shape
    if weights is None:
        weights = np.full(len(sigma), 1.0 / len(sigma))
    ph = conditional_hidden(params, sigma)
    wp = weights[:, None] * ph
    flat = sigma.reshape(len(sigma), n * d)
    dW = -(wp.T @ flat).reshape(nh, n, d).transpose(1, 0, 2)
    db = -(weights @ flat).reshape(n, d)
    return dW, db, -wp.sum(axis=0)


def _mean_energy_gradient(params: RbmParameters, sigma: np.ndarray, weights: np.ndarray | None) -> RbmParameters:
    sigma = _check_visible(params, sigma)
    if sigma.ndim != 3 or len(sigma) == 0:
        raise ValueError("gradient batches must be non-empty (count, N, D) tensors")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64) / np.sum(weights)
    return RbmParameters(*_energy_gradient_arrays(params, sigma, weights))


def gradients(
    params: RbmParameters,
    positive,
    negative,
    positive_weights: np.ndarray | None = None,
    negative_weights: np.ndarray | None = None,
) -> RbmParameters:
    """``<grad F>_positive - <grad F>_negative``, the KL gradient estimate.

    ``dF/dW_ijd = -p(h_j=1|sigma) sigma_id``, ``dF/dc_j = -p(h_j=1|sigma)``,
    ``dF/db_id = -sigma_id``. Optional weights turn either average into an
    exact expectation over an enumerated distribution.
    """
    pos = _mean_energy_gradient(params, positive, positive_weights)
    neg = _mean_energy_gradient(params, negative, negative_weights)
    return pos - neg


# ---------------------------------------------------------------------------
# exact enumeration (validation only)
# ---------------------------------------------------------------------------


def _enumerate(params: RbmParameters):
    dim = params.local_dim**params.n_sites
    if dim > ENUMERATION_LIMIT:
        raise ValueError(f"refusing to enumerate {dim} visible configurations")
    space = _space_of(params)
    return space, space.all_configs()


def _space_of(params: RbmParameters) -> HilbertSpace:
    ell_max = math.isqrt(params.local_dim) - 1
    if (ell_max + 1) ** 2 != params.local_dim:
        raise ValueError(f"local dimension {params.local_dim} is not a rotor truncation")
    return HilbertSpace(params.n_sites, ell_max)


def all_effective_energies(params: RbmParameters) -> np.ndarray:
    """``F(sigma)`` for every configuration, in basis index order."""
    _, configs = _enumerate(params)
    out = np.empty(len(configs))
    chunk = 65536
    for lo in range(0, len(configs), chunk):
        out[lo : lo + chunk] = effective_energy(params, one_hot(configs[lo : lo + chunk], params.local_dim))
    return out


def exact_log_partition(params: RbmParameters) -> float:
    return float(logsumexp(-all_effective_energies(params)))


def exact_partition(params: RbmParameters) -> float:
    return math.exp(exact_log_partition(params))


def exact_probabilities(params: RbmParameters) -> np.ndarray:
    """``p_lambda(sigma)`` over the full basis (index order)."""
    neg = -all_effective_energies(params)
    return np.exp(neg - logsumexp(neg))


def exact_kl(params: RbmParameters, q: np.ndarray) -> float:
    """``sum_sigma q ln(q / p_lambda)`` by enumeration."""
    q = np.asarray(q, dtype=np.float64)
    neg = -all_effective_energies(params)
    logp = neg - logsumexp(neg)
    mask = q > 0
    return float(np.sum(q[mask] * (np.log(q[mask]) - logp[mask])))


def exact_kl_gradient(params: RbmParameters, q: np.ndarray) -> RbmParameters:
    """Gradient of :func:`exact_kl`: ``<grad F>_q - <grad F>_p`` by enumeration."""
    _, configs = _enumerate(params)
    sigma = one_hot(configs, params.local_dim)
    return gradients(params, sigma, sigma, positive_weights=q, negative_weights=exact_probabilities(params))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class Evaluation(NamedTuple):
    delta: float
    delta_stderr: float
    kinetic: float = float("nan")
    potential: float = float("nan")


class TraceRow(NamedTuple):
    epoch: int
    delta: float
    delta_stderr: float
    kinetic: float
    potential: float


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, trace: list[TraceRow], params: RbmParameters):
        super().__init__(message)
        self.trace = trace
        self.params = params


@dataclass
class TrainingConfig:
    """Hyperparameters; the defaults are the reference training settings."""

    learning_rate: float = 0.001
    positive_batch: int = 20
    negative_batch: int = 10
    gibbs_k: int = 10
    max_epochs: int = 2000
    eval_interval: int = 10
    eval_samples: int = 10_000
    eval_gibbs_steps: int = 1_000
    seed: int = 0
    target_delta: float = 0.05

    def __post_init__(self):
        counts = ("positive_batch", "negative_batch", "gibbs_k", "max_epochs", "eval_interval", "eval_samples", "eval_gibbs_steps")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.target_delta > 0:
            raise ValueError("target_delta must be positive")


@dataclass
class TrainingResult:
    params: RbmParameters
    trace: list[TraceRow] = field(default_factory=list)
    epochs: int = 0
    reached: bool = False

    @property
    def final_delta(self) -> float:
        return self.trace[-1].delta if self.trace else float("nan")

    @property
    def best_delta(self) -> float:
        return min((r.delta for r in self.trace), default=float("nan"))


Evaluator = Callable[[RbmParameters, int], Evaluation]


def train(
    params: RbmParameters,
    samples,
    cfg: TrainingConfig,
    evaluator: Evaluator | None = None,
) -> TrainingResult:
    """CD-k stochastic gradient descent.

    Each epoch shuffles the data and sweeps equally sized disjoint mini-batches
    of ``positive_batch`` samples (a trailing remainder is dropped). The
    negative batch is ``negative_batch`` chains started from the first samples
    of the current mini-batch and advanced ``gibbs_k`` steps. ``evaluator`` is
    called every ``eval_interval`` epochs; training stops once it reports
    ``delta <= target_delta``; an infinite target disables early stopping.

    ``samples`` is a :class:`MeasurementDataset`, an ``(M, N)`` label array or
    an ``(M, N, D)`` one-hot tensor. ``params`` is not modified.
    """
    labels = getattr(samples, "samples", samples)
    labels = np.asarray(labels)
    data = labels if labels.ndim == 3 else one_hot(labels, params.local_dim)
    data = _check_visible(params, data)
    labels = np.argmax(data, axis=-1)
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    lam = params.copy()
    result = TrainingResult(lam)
    batch = min(cfg.positive_batch, len(data))
    n_batches = len(data) // batch
    neg_rows = np.arange(cfg.negative_batch) % batch

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(data))
        for q in range(n_batches):
            rows = order[q * batch : (q + 1) * batch]
            neg = gibbs_steps_labels(lam, labels[rows[neg_rows]], cfg.gibbs_k, rng)
            pW, pb, pc = _energy_gradient_arrays(lam, data[rows], None)
            nW, nb, nc = _energy_gradient_arrays(lam, one_hot(neg, lam.local_dim), None)
            lam.W -= cfg.learning_rate * (pW - nW)
            lam.b -= cfg.learning_rate * (pb - nb)
            lam.c -= cfg.learning_rate * (pc - nc)
        result.epochs = epoch
        if not lam.is_finite():
            raise DivergenceError(f"parameters became non-finite at epoch {epoch}", result.trace, lam)
        if evaluator is not None and epoch % cfg.eval_interval == 0:
            ev = evaluator(lam, epoch)
            result.trace.append(TraceRow(epoch, *ev))
            log.debug("epoch %d: delta=%.4f +- %.4f", epoch, ev.delta, ev.delta_stderr)
            if ev.delta <= cfg.target_delta:
                result.reached = True
                if math.isfinite(cfg.target_delta):
                    break
    return result


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"ROTORRBM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIII")


class CheckpointError(ValueError):
    pass


def save_params(params: RbmParameters, path) -> None:
    """Binary checkpoint: magic, version, N, ell_max, n_h, then W, b, c (<f8, C order)."""
    ell_max = _space_of(params).ell_max
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, params.n_sites, ell_max, params.n_hidden)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (params.W, params.b, params.c))
    Path(path).write_bytes(header + payload)


def load_params(path) -> RbmParameters:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError("file too short for a checkpoint header")
    magic, version, n, ell_max, nh = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("not an RBM checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    d = (ell_max + 1) ** 2
    sizes = (n * nh * d, n * d, nh)
    body = raw[_HEADER.size :]
    if len(body) != 8 * sum(sizes):
        raise CheckpointError(f"payload holds {len(body)} bytes, header implies {8 * sum(sizes)}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    W = flat[: sizes[0]].reshape(n, nh, d)
    b = flat[sizes[0] : sizes[0] + sizes[1]].reshape(n, d)
    c = flat[sizes[0] + sizes[1] :]
    return RbmParameters(W, b, c)


def labels_of(sigma) -> np.ndarray:
    """Flattened labels of a one-hot visible tensor."""
    return from_one_hot(sigma)
