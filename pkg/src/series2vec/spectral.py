"""One-sided DFT magnitude spectra of multichannel series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SpectralSeries:
    """Magnitudes of shape (d_x, M) with M = L // 2 + 1."""

    magnitudes: np.ndarray
    source_length: int

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[-1]


def n_bins(length: int) -> int:
    return length // 2 + 1


def real_dft_magnitude(x: np.ndarray) -> np.ndarray:
    """|X[k]| for k = 0 .. L//2 along the last axis. No window, no 1/L scaling.

    Accepts (L,), (d_x, L) or (n, d_x, L) arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise DomainError(f"spectrum needs at least 2 samples along time, got shape {x.shape}")
    return np.abs(np.fft.rfft(x, axis=-1))


def spectrum(x: np.ndarray) -> SpectralSeries:
    """Wrap :func:`real_dft_magnitude` for a single (d_x, L) series."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return SpectralSeries(real_dft_magnitude(x), x.shape[-1])
