"""Synthetic projective measurements drawn exactly from ``|psi|**2``.

Dataset files are UTF-8 text::

    # n_sites = 4
    # ell_max = 3
    # R = 1.1
    # seed = 1234
    # count = 10000
    # source = exact
    0 0 0 0
    2 0 0 2
    ...

Each sample line holds the ``N`` flattened rotor labels ``sigma_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import HilbertSpace
from .eigensolver import GroundStateSolution

SHARD_SIZE = 1_000_000
_HEADER_KEYS = ("n_sites", "ell_max", "R", "seed", "count", "source")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementDataset:
    n_sites: int
    ell_max: int
    R: float
    seed: int
    samples: np.ndarray = field(repr=False)
    source: str = "exact"

    def __post_init__(self):
        HilbertSpace(self.n_sites, self.ell_max).check_config(self.samples)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a (count, n_sites) array")

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.n_sites, self.ell_max)

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, count: int) -> "MeasurementDataset":
        """The first ``count`` samples (generation order is preserved)."""
        return MeasurementDataset(self.n_sites, self.ell_max, self.R, self.seed, self.samples[:count], self.source)


def sample_exact(
    solution: GroundStateSolution,
    count: int,
    seed: int,
    space: HilbertSpace | None = None,
    R: float | None = None,
) -> MeasurementDataset:
    """I.i.d. draws from ``psi**2`` by inverting the cumulative distribution.

    Draws are made in shards of ``SHARD_SIZE``; shard ``k`` uses the generator
    ``default_rng([seed, k])`` and shards are concatenated in index order.
    """
    space = space or solution.space
    R = solution.R if R is None else R
    if space is None:
        raise ValueError("the Hilbert space is unknown; pass `space`")
    if count < 1:
        raise ValueError("count must be at least 1")
    p = np.asarray(solution.amplitudes, dtype=np.float64) ** 2
    if p.shape != (space.total_dim,):
        raise ValueError("amplitude vector does not match the Hilbert space")
    cdf = np.cumsum(p)
    if abs(cdf[-1] - 1.0) > 1e-8:
        raise ValueError(f"state is not normalised (norm^2 = {cdf[-1]!r})")
    draws = []
    for shard, start in enumerate(range(0, count, SHARD_SIZE)):
        n = min(SHARD_SIZE, count - start)
        u = np.random.default_rng([seed, shard]).random(n) * cdf[-1]
        draws.append(np.searchsorted(cdf, u, side="right"))
    idx = np.minimum(np.concatenate(draws), space.total_dim - 1)
    return MeasurementDataset(
        space.n_sites, space.ell_max, float(R) if R is not None else float("nan"), int(seed), space.config(idx)
    )


def empirical_distribution(dataset: MeasurementDataset) -> np.ndarray:
    space = dataset.space
    return np.bincount(space.index(dataset.samples), minlength=space.total_dim) / len(dataset)


def write_dataset(ds: MeasurementDataset, path) -> None:
    lines = [
        f"# n_sites = {ds.n_sites}",
        f"# ell_max = {ds.ell_max}",
        f"# R = {float(ds.R)!r}",
        f"# seed = {ds.seed}",
        f"# count = {len(ds)}",
        f"# source = {ds.source}",
    ]
    body = "\n".join(" ".join(str(int(x)) for x in row) for row in ds.samples)
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if body else ""), encoding="utf-8")


def read_dataset(path) -> MeasurementDataset:
    meta: dict[str, str] = {}
    rows: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if rows:
                    raise DatasetFormatError(f"line {lineno}: header after samples")
                key, sep, value = line[1:].partition("=")
                if not sep:
                    raise DatasetFormatError(f"line {lineno}: expected 'key = value'")
                meta[key.strip()] = value.strip()
                continue
            if not rows:
                header = _parse_header(meta)
                dim = (header["ell_max"] + 1) ** 2
            try:
                row = [int(tok) for tok in line.split()]
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: non-integer label") from None
            if len(row) != header["n_sites"]:
                raise DatasetFormatError(f"line {lineno}: expected {header['n_sites']} labels, got {len(row)}")
            if min(row) < 0 or max(row) >= dim:
                raise DatasetFormatError(f"line {lineno}: label out of range for ell_max={header['ell_max']}")
            rows.append(row)
    header = _parse_header(meta)
    if len(rows) != header["count"]:
        raise DatasetFormatError(f"header declares {header['count']} samples, file holds {len(rows)}")
    samples = np.array(rows, dtype=np.int64).reshape(len(rows), header["n_sites"])
    return MeasurementDataset(
        header["n_sites"], header["ell_max"], header["R"], header["seed"], samples, header["source"]
    )


def _parse_header(meta: dict[str, str]) -> dict:
    missing = [k for k in _HEADER_KEYS if k not in meta and k != "source"]
    if missing:
        raise DatasetFormatError(f"header missing keys: {', '.join(missing)}")
    try:
        out = {
            "n_sites": int(meta["n_sites"]),
            "ell_max": int(meta["ell_max"]),
            "R": float(meta["R"]),
            "seed": int(meta["seed"]),
            "count": int(meta["count"]),
            "source": meta.get("source", "exact"),
        }
    except ValueError as exc:
        raise DatasetFormatError(f"malformed header value: {exc}") from None
    if out["n_sites"] < 1 or out["ell_max"] < 0 or out["count"] < 0:
        raise DatasetFormatError("header values out of range")
    return out
