"""Linear probing, low-label curves and average-rank aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError

PROBE_L2 = 1e-4
PROBE_TOL = 1e-6
PROBE_MAX_ITER = 5000
DEFAULT_GRID = (5, 10, 20, 50, 100)


@dataclass
class ProbeResult:
    accuracy: float
    per_class_accuracy: list[float]
    confusion: list[list[int]]
    labels_per_class: list[int]
    iterations: int

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class LogisticModel:
    """Multinomial logistic regression on standardized features."""

    weight: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    iterations: int

    def logits(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.scale) @ self.weight + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_logistic(x: np.ndarray, y: np.ndarray, n_classes: int, l2: float = PROBE_L2,
                 tol: float = PROBE_TOL, max_iter: int = PROBE_MAX_ITER) -> LogisticModel:
    """Full-batch gradient descent on mean cross-entropy + (l2/2)||W||^2 from zero weights.

    The step is 1/Lipschitz of the objective, so it decreases monotonically.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    xs = (x - mu) / sd
    onehot = np.eye(n_classes)[y]
    xb = np.hstack([xs, np.ones((n, 1))])
    # softmax cross-entropy Hessian is bounded by 0.5 * X^T X / n
    lipschitz = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + l2
    step = 1.0 / lipschitz
    w = np.zeros((d + 1, n_classes))
    it = 0
    for it in range(1, max_iter + 1):
        p = _softmax(xb @ w)
        grad = xb.T @ (p - onehot) / n
        grad[:-1] += l2 * w[:-1]
        if np.linalg.norm(grad) < tol:
            break
        w -= step * grad
    return LogisticModel(w[:-1], w[-1], mu, sd, it)


def _check_labels(labels: np.ndarray, name: str) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or not np.issubdtype(labels.dtype, np.integer))):
        raise DomainError(f"{name} must be a 1-D array of integers >= 0")
    return labels.astype(np.int64)


def linear_probe(train_reps, train_labels, test_reps, test_labels) -> ProbeResult:
    """Fit a logistic-regression probe on frozen representations and score the test set."""
    train_reps = np.asarray(train_reps, dtype=np.float64)
    test_reps = np.asarray(test_reps, dtype=np.float64)
    y_tr = _check_labels(train_labels, "train_labels")
    y_te = _check_labels(test_labels, "test_labels")
    if train_reps.shape[0] != y_tr.size or test_reps.shape[0] != y_te.size:
        raise DomainError("representation and label counts differ")
    n_classes = int(max(y_tr.max(initial=-1), y_te.max(initial=-1))) + 1
    counts = np.bincount(y_tr, minlength=n_classes)
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        raise DomainError(f"class {int(absent[0])} is absent from the training labels")
    model = fit_logistic(train_reps, y_tr, n_classes)
    pred = model.predict(test_reps) if test_reps.shape[0] else np.zeros(0, dtype=np.int64)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_te, pred), 1)
    row_totals = confusion.sum(axis=1)
    per_class = [float(confusion[c, c] / row_totals[c]) if row_totals[c] else float("nan") for c in range(n_classes)]
    total = confusion.sum()
    acc = float(np.trace(confusion) / total) if total else float("nan")
    return ProbeResult(acc, per_class, confusion.tolist(), counts.tolist(), model.iterations)


def stratified_subsample(labels: np.ndarray, n_per_class: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels)
    picked = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if n_per_class > members.size:
            raise DomainError(f"class {int(c)} has only {members.size} samples, {n_per_class} requested")
        picked.append(rng.choice(members, size=n_per_class, replace=False))
    return np.sort(np.concatenate(picked))


def low_label_curve(
    train_reps,
    train_labels,
    test_reps,
    test_labels,
    grid: Sequence[int] = DEFAULT_GRID,
    repeats: int = 5,
    seed: int = 0,
) -> list[tuple[int, float, float]]:
    """Probe accuracy with n labeled training samples per class, for each n in ``grid``.

    Returns (n_per_class, mean accuracy, population std) over ``repeats``
    seeded stratified draws.
    """
    train_reps = np.asarray(train_reps, dtype=np.float64)
    y_tr = _check_labels(train_labels, "train_labels")
    if repeats < 1:
        raise DomainError("repeats must be >= 1")
    classes, counts = np.unique(y_tr, return_counts=True)
    for n in grid:
        if n < 1:
            raise DomainError(f"grid values must be >= 1, got {n}")
        short = classes[counts < n]
        if short.size:
            c = int(short[0])
            raise DomainError(f"class {c} has only {int(counts[classes == c][0])} samples, {n} requested")
    curve = []
    for n in grid:
        accs = []
        for r in range(repeats):
            rng = np.random.default_rng([seed, n, r])
            idx = stratified_subsample(y_tr, n, rng)
            accs.append(linear_probe(train_reps[idx], y_tr[idx], test_reps, test_labels).accuracy)
        curve.append((int(n), float(np.mean(accs)), float(np.std(accs))))
    return curve


def average_rank(table: Mapping[str, Mapping[str, float]]) -> dict[str, float]:
    """Mean per-dataset rank of each model (1 = most accurate, ties share the mean rank)."""
    models = list(table)
    if not models:
        raise DomainError("empty accuracy table")
    datasets = sorted({d for m in models for d in table[m]})
    acc = np.empty((len(models), len(datasets)))
    for i, m in enumerate(models):
        for j, d in enumerate(datasets):
            v = table[m].get(d)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                raise DomainError(f"missing accuracy for model {m!r} on dataset {d!r}")
            acc[i, j] = float(v)
    ranks = np.column_stack([rankdata(-acc[:, j], method="average") for j in range(len(datasets))])
    return {m: float(ranks[i].mean()) for i, m in enumerate(models)}


# ---------------------------------------------------------------------------
# output formats


def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Aligned plain-text table; floats printed with 4 decimals."""

    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    body = [[cell(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"


def curve_csv(curve: Sequence[tuple[int, float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n_per_class", "mean", "std"])
    for n, m, s in curve:
        writer.writerow([n, repr(m), repr(s)])
    return buf.getvalue()


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
