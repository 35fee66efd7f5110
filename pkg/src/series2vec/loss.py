"""Similarity-preserving objective: smooth-L1 between dot products and target distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import DomainError
from .numerics import Tensor
from .similarity import PairwiseDistanceMatrix


@dataclass(frozen=True)
class LossBreakdown:
    time: Tensor | None
    frequency: Tensor | None
    total: Tensor

    def as_floats(self) -> dict[str, float | None]:
        return {
            "time": None if self.time is None else self.time.item(),
            "frequency": None if self.frequency is None else self.frequency.item(),
            "total": self.total.item(),
        }


def smooth_l1(x: float) -> float:
    return 0.5 * x * x if abs(x) < 1 else abs(x) - 0.5


def representation_similarity(z_i, z_j) -> float:
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise DomainError(f"dimension mismatch: {z_i.shape} vs {z_j.shape}")
    return float(z_i @ z_j)


def sim_loss(z, targets: PairwiseDistanceMatrix | np.ndarray) -> Tensor:
    """Mean smooth-L1 over unordered pairs i < j of (z_i . z_j - target_ij).

    Targets enter as constants, so no gradient flows into them.
    """
    z = nx.as_tensor(z)
    t = targets.values if isinstance(targets, PairwiseDistanceMatrix) else np.asarray(targets, dtype=np.float64)
    b = z.shape[0]
    if b < 2:
        raise DomainError(f"similarity loss needs at least 2 rows, got {b}")
    if t.shape != (b, b):
        raise DomainError(f"target matrix shape {t.shape} does not match batch size {b}")
    rows, cols = np.triu_indices(b, k=1)
    gram = nx.matmul(z, nx.transpose(z))
    diff = gram[rows, cols] - t[rows, cols]
    return nx.mean(nx.smooth_l1(diff))


def total_loss(z_t=None, targets_t=None, z_f=None, targets_f=None, extra=()) -> LossBreakdown:
    """Unweighted sum of the active branch losses plus any ``extra`` scalar terms."""
    lt = sim_loss(z_t, targets_t) if z_t is not None else None
    lf = sim_loss(z_f, targets_f) if z_f is not None else None
    terms = [x for x in (lt, lf, *extra) if x is not None]
    if not terms:
        raise DomainError("total_loss needs at least one active branch")
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return LossBreakdown(lt, lf, total)
