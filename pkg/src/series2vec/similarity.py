"""Pretext targets: locality-weighted (soft-)DTW in time, Euclidean distance on spectra.

The DTW cell cost is ``||a_i - b_j||^2 * exp(-(alpha/2) (i - j)^2)``. With
``gamma == 0`` the path minimum is a hard min; with ``gamma > 0`` it is the
log-sum-exp soft-min. Targets are constants for training, so nothing here is
differentiated.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, DomainError
from .spectral import real_dft_magnitude

Kind = Literal["time", "frequency"]

_PAIR_CHUNK = 2048


@dataclass(frozen=True)
class SoftDtwConfig:
    alpha: float = 0.1
    gamma: float = 0.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if not self.gamma >= 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class PairwiseDistanceMatrix:
    values: np.ndarray
    kind: str
    divisor: float


def worker_count() -> int:
    """Thread cap from SERIES2VEC_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("SERIES2VEC_THREADS", "1")))
    except ValueError:
        return 1


def _as_series(x) -> np.ndarray:
    """Coerce to (L, d) time-major layout from (L,) or (d, L)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim == 2:
        return x.T
    raise DimensionError(f"expected a (L,) or (d_x, L) series, got shape {x.shape}")


def locality_weight(i, j, alpha: float):
    return np.exp(-0.5 * alpha * (np.asarray(i, dtype=np.float64) - j) ** 2)


def point_cost(a, b, i: int, j: int, alpha: float) -> float:
    """Squared distance of two channel vectors, down-weighted by |i - j|."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise DomainError(f"channel mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(diff @ diff * locality_weight(i, j, alpha))


def _softmin3(u, v, w, gamma: float):
    if gamma == 0.0:
        return np.minimum(np.minimum(u, v), w)
    m = np.minimum(np.minimum(u, v), w)
    finite = np.isfinite(m)
    safe = np.where(finite, m, 0.0)
    with np.errstate(invalid="ignore"):
        s = np.exp(-(u - safe) / gamma) + np.exp(-(v - safe) / gamma) + np.exp(-(w - safe) / gamma)
        out = safe - gamma * np.log(s)
    return np.where(finite, out, np.inf)


def _dtw_batch(a: np.ndarray, b: np.ndarray, alpha: float, gamma: float) -> np.ndarray:
    """DTW for P pairs at once. ``a``: (P, La, d), ``b``: (P, Lb, d)."""
    p, la, _ = a.shape
    lb = b.shape[1]
    cols = np.arange(lb, dtype=np.float64)
    prev = np.full((p, lb + 1), np.inf)
    prev[:, 0] = 0.0
    for i in range(la):
        diff = a[:, i : i + 1, :] - b
        cost = np.einsum("pjd,pjd->pj", diff, diff) * np.exp(-0.5 * alpha * (i - cols) ** 2)
        cur = np.full((p, lb + 1), np.inf)
        for j in range(lb):
            cur[:, j + 1] = cost[:, j] + _softmin3(prev[:, j], prev[:, j + 1], cur[:, j], gamma)
        prev = cur
    return prev[:, lb]


def soft_dtw(a, b, cfg: SoftDtwConfig | None = None) -> float:
    """Locality-weighted DTW between two series.

    ``a`` and ``b`` are (L,) or (d_x, L); lengths may differ.
    """
    cfg = cfg or SoftDtwConfig()
    sa, sb = _as_series(a), _as_series(b)
    if sa.shape[0] == 0 or sb.shape[0] == 0:
        raise DomainError("soft_dtw needs non-empty series")
    if sa.shape[1] != sb.shape[1]:
        raise DomainError(f"channel mismatch: {sa.shape[1]} vs {sb.shape[1]}")
    return float(_dtw_batch(sa[None], sb[None], cfg.alpha, cfg.gamma)[0])


def euclidean_spectral(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"spectrum shape mismatch: {a.shape} vs {b.shape}")
    d = (a - b).ravel()
    return math.sqrt(float(d @ d))


def _upper_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def dtw_matrix(samples: np.ndarray, cfg: SoftDtwConfig, threads: int | None = None) -> np.ndarray:
    """Raw symmetric DTW matrix for ``samples`` of shape (n, d_x, L)."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    out = np.zeros((n, n))
    if n < 2:
        return out
    series = np.transpose(samples, (0, 2, 1))  # (n, L, d)
    rows, cols = _upper_pairs(n)
    chunks = [slice(s, min(s + _PAIR_CHUNK, rows.size)) for s in range(0, rows.size, _PAIR_CHUNK)]

    def run(sl):
        return _dtw_batch(series[rows[sl]], series[cols[sl]], cfg.alpha, cfg.gamma)

    threads = threads or worker_count()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(sl) for sl in chunks]
    values = np.concatenate(results)
    out[rows, cols] = values
    out[cols, rows] = values
    return out


def spectral_matrix(spectra: np.ndarray) -> np.ndarray:
    """Raw symmetric Euclidean matrix for spectra of shape (n, d_x, M)."""
    flat = np.asarray(spectra, dtype=np.float64).reshape(len(spectra), -1)
    n = flat.shape[0]
    out = np.zeros((n, n))
    rows, cols = _upper_pairs(n)
    d = flat[rows] - flat[cols]
    values = np.sqrt(np.einsum("pk,pk->p", d, d))
    out[rows, cols] = values
    out[cols, rows] = values
    return out


def normalize(raw: np.ndarray, kind: str) -> PairwiseDistanceMatrix:
    """Divide by the matrix maximum (left unchanged when the maximum is 0)."""
    top = float(raw.max()) if raw.size else 0.0
    values = raw / top if top > 0 else raw.copy()
    return PairwiseDistanceMatrix(values, kind, top)


def pairwise_targets(batch: np.ndarray, kind: Kind, cfg: SoftDtwConfig | None = None) -> PairwiseDistanceMatrix:
    """Normalized pairwise distances for a batch of (B, d_x, L) series.

    For ``kind == "frequency"`` the spectra are computed from the raw series.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, None, :]
    if batch.shape[0] < 2:
        raise DomainError(f"pairwise targets need a batch of at least 2, got {batch.shape[0]}")
    if kind == "time":
        raw = dtw_matrix(batch, cfg or SoftDtwConfig())
    elif kind == "frequency":
        raw = spectral_matrix(real_dft_magnitude(batch))
    else:
        raise DomainError(f"unknown target kind {kind!r}")
    return normalize(raw, kind)


class TargetCache:
    """Raw distance matrices over a whole dataset, sliced per batch.

    Slicing then normalizing gives the same matrix as calling
    :func:`pairwise_targets` on the batch, without recomputing DTW each epoch.
    """

    def __init__(self, samples: np.ndarray, cfg: SoftDtwConfig, kinds=("time", "frequency")):
        self.samples = np.asarray(samples, dtype=np.float64)
        self.cfg = cfg
        self._raw: dict[str, np.ndarray] = {}
        for kind in kinds:
            self.raw(kind)

    def raw(self, kind: str) -> np.ndarray:
        if kind not in self._raw:
            if kind == "time":
                self._raw[kind] = dtw_matrix(self.samples, self.cfg)
            elif kind == "frequency":
                self._raw[kind] = spectral_matrix(real_dft_magnitude(self.samples))
            else:
                raise DomainError(f"unknown target kind {kind!r}")
        return self._raw[kind]

    def batch(self, indices, kind: str) -> PairwiseDistanceMatrix:
        indices = np.asarray(indices)
        if indices.size < 2:
            raise DomainError("pairwise targets need a batch of at least 2")
        return normalize(self.raw(kind)[np.ix_(indices, indices)], kind)
