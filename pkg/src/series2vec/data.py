"""Datasets: CSV-directory and .ts archive ingestion, synthetic generators, splits."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ParseError, UnsupportedFormatError

SYNTHETIC_KINDS = ("tones", "shapes", "warps")


@dataclass(frozen=True)
class Dataset:
    """``samples`` is (n, d_x, L); ``labels`` is (n,) ints in 0..C-1 or None."""

    samples: np.ndarray
    labels: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 3:
            raise DomainError(f"samples must be (n, d_x, L), got shape {s.shape}")
        object.__setattr__(self, "samples", s)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (s.shape[0],):
                raise DomainError(f"labels shape {lab.shape} does not match {s.shape[0]} samples")
            if lab.size and lab.min() < 0:
                raise DomainError("labels must be non-negative")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def length(self) -> int:
        return self.samples.shape[2]

    @property
    def n_classes(self) -> int:
        if self.labels is None or self.labels.size == 0:
            return 0
        return int(self.labels.max()) + 1

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        meta = dict(self.metadata)
        if "subjects" in meta:
            meta["subjects"] = [meta["subjects"][i] for i in indices]
        if "files" in meta:
            meta["files"] = [meta["files"][i] for i in indices]
        return Dataset(self.samples[indices], labels, meta)

    def equals(self, other: "Dataset") -> bool:
        if not np.array_equal(self.samples, other.samples):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


def znormalize(samples: np.ndarray) -> np.ndarray:
    """Per-sample, per-channel zero mean and unit std; constant channels become 0."""
    samples = np.asarray(samples, dtype=np.float64)
    mu = samples.mean(axis=-1, keepdims=True)
    sd = samples.std(axis=-1, keepdims=True)
    centered = samples - mu
    return np.divide(centered, sd, out=np.zeros_like(centered), where=sd > 0)


def _finish(samples, labels, meta, normalize: bool) -> Dataset:
    if normalize:
        samples = znormalize(samples)
    meta["znormalized"] = bool(normalize)
    return Dataset(samples, labels, meta)


# ---------------------------------------------------------------------------
# CSV directory layout


@dataclass(frozen=True)
class CsvSchema:
    delimiter: str = ","
    header: bool = False
    labels_file: str = "labels.csv"
    suffix: str = ".csv"


def _parse_float(text: str, path, row: int, column: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"unreadable value {text!r}", path, row, column) from None


def _read_table(path: Path, schema: CsvSchema) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        for r, line in enumerate(reader, start=1):
            if schema.header and r == 1:
                continue
            if not line or all(not cell.strip() for cell in line):
                continue
            rows.append([_parse_float(cell, path, r, c) for c, cell in enumerate(line, start=1)])
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ParseError("ragged rows", path)
    return np.array(rows, dtype=np.float64)


def load_csv_dir(path, schema: CsvSchema | None = None, normalize: bool = True) -> Dataset:
    """Load one (L x d_x) table per sample plus an optional labels index.

    The labels file holds ``filename,label[,subject]`` rows. Samples are
    ordered by filename.
    """
    schema = schema or CsvSchema()
    root = Path(path)
    if not root.is_dir():
        raise DomainError(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix == schema.suffix and p.name != schema.labels_file)
    if not files:
        raise DomainError(f"no samples in {root}")
    tables, shape = [], None
    for f in files:
        t = _read_table(f, schema)
        if shape is None:
            shape = t.shape
        elif t.shape != shape:
            raise DomainError(f"{f.name} has shape {t.shape}, expected {shape}")
        tables.append(t.T)
    samples = np.stack(tables)
    meta = {"name": root.name, "files": [f.name for f in files]}
    labels = None
    labels_path = root / schema.labels_file
    if labels_path.exists():
        mapping, subjects = {}, {}
        with open(labels_path, newline="") as fh:
            for r, line in enumerate(csv.reader(fh), start=1):
                if not line:
                    continue
                if len(line) < 2:
                    raise ParseError("expected filename,label", labels_path, r)
                try:
                    mapping[line[0]] = int(line[1])
                except ValueError:
                    raise ParseError(f"non-integer label {line[1]!r}", labels_path, r, 2) from None
                if len(line) > 2:
                    subjects[line[0]] = line[2]
        missing = [f.name for f in files if f.name not in mapping]
        if missing:
            raise DomainError(f"no label for {missing[0]}")
        labels = np.array([mapping[f.name] for f in files], dtype=np.int64)
        if subjects:
            meta["subjects"] = [subjects.get(f.name) for f in files]
    return _finish(samples, labels, meta, normalize)


def write_csv_dir(dataset: Dataset, path, schema: CsvSchema | None = None) -> None:
    """Write the CSV layout; values use shortest round-trip repr, so output is byte-stable."""
    schema = schema or CsvSchema()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(dataset))))
    names = []
    for i, sample in enumerate(dataset.samples):
        name = f"sample_{i:0{width}d}{schema.suffix}"
        names.append(name)
        lines = [schema.delimiter.join(repr(float(v)) for v in row) for row in sample.T]
        (root / name).write_text("\n".join(lines) + "\n")
    if dataset.labels is not None:
        subjects = dataset.metadata.get("subjects")
        rows = []
        for i, name in enumerate(names):
            row = f"{name},{int(dataset.labels[i])}"
            if subjects and subjects[i] is not None:
                row += f",{subjects[i]}"
            rows.append(row)
        (root / schema.labels_file).write_text("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# UCR/UEA .ts archive format

_KNOWN_DIRECTIVES = {
    "@problemname", "@timestamps", "@missing", "@univariate", "@dimensions",
    "@equallength", "@serieslength", "@classlabel", "@targetlabel", "@data",
}


def load_ts_sktime(path, labels: bool = True, normalize: bool = True) -> Dataset:
    """Parse an equal-length problem in the archive's ``.ts`` text format."""
    path = Path(path)
    meta: dict = {"name": path.stem}
    class_values: list[str] | None = None
    has_labels_header = False
    rows: list[list[list[float]]] = []
    raw_labels: list[str] = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise ParseError("data before @data directive", path, lineno)
                parts = line.split()
                key = parts[0].lower()
                if key not in _KNOWN_DIRECTIVES:
                    warnings.warn(f"{path.name}:{lineno}: unknown directive {parts[0]}", stacklevel=2)
                    continue
                if key == "@problemname" and len(parts) > 1:
                    meta["name"] = parts[1]
                elif key == "@classlabel":
                    if len(parts) > 1 and parts[1].lower() == "true":
                        has_labels_header = True
                        class_values = parts[2:]
                elif key == "@equallength" and len(parts) > 1 and parts[1].lower() == "false":
                    raise UnsupportedFormatError(f"{path.name}: unequal-length problems are not supported")
                elif key == "@data":
                    in_data = True
                continue
            dims = line.split(":")
            if has_labels_header:
                raw_labels.append(dims[-1].strip())
                dims = dims[:-1]
            sample = []
            for c, dim in enumerate(dims, start=1):
                values = []
                for token in dim.split(","):
                    token = token.strip()
                    if token == "?":
                        raise UnsupportedFormatError(f"{path.name}:{lineno}: missing values are not supported")
                    values.append(_parse_float(token, path, lineno, c))
                sample.append(values)
            rows.append(sample)
    if labels and not has_labels_header:
        raise DomainError(f"{path.name}: labels requested but no @classLabel directive")
    if not rows:
        raise DomainError(f"{path.name}: no samples")
    shapes = {(len(s), len(s[0])) for s in rows} | {(len(s), len(d)) for s in rows for d in s}
    if len(shapes) != 1:
        raise UnsupportedFormatError(f"{path.name}: series have unequal lengths or dimension counts")
    samples = np.array(rows, dtype=np.float64)
    label_arr = None
    if labels:
        order: list[str] = []
        for lab in raw_labels:
            if lab not in order:
                order.append(lab)
        index = {lab: i for i, lab in enumerate(order)}
        label_arr = np.array([index[lab] for lab in raw_labels], dtype=np.int64)
        meta["class_mapping"] = {lab: i for lab, i in index.items()}
        if class_values:
            meta["declared_classes"] = class_values
    return _finish(samples, label_arr, meta, normalize)


# ---------------------------------------------------------------------------
# synthetic generators

TONE_CYCLES = (2.0, 5.0, 9.0, 14.0, 20.0)


def _bell(t, a, b):
    ramp = np.clip((t - a) / max(b - a, 1), 0, 1)
    return np.where((t >= a) & (t <= b), ramp, 0.0)


def _funnel(t, a, b):
    ramp = np.clip((b - t) / max(b - a, 1), 0, 1)
    return np.where((t >= a) & (t <= b), ramp, 0.0)


def _cylinder(t, a, b):
    return ((t >= a) & (t <= b)).astype(np.float64)


def make_synthetic(
    kind: str,
    n_per_class: int,
    length: int = 64,
    d_x: int = 1,
    noise_sigma: float = 0.1,
    seed: int = 0,
    n_classes: int = 3,
) -> Dataset:
    """Seeded labeled toy problems.

    ``tones``: class c is a sinusoid with ``TONE_CYCLES[c]`` cycles per series
    (channel k is phase-shifted by k*pi/4). ``shapes``: bell / funnel /
    cylinder envelopes with random onset and offset. ``warps``: one bump
    shape, class c warps time by ``t ** (1 + 0.6 c)``.
    """
    if kind not in SYNTHETIC_KINDS:
        raise DomainError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    if n_per_class < 1 or length < 2 or d_x < 1:
        raise DomainError("n_per_class >= 1, length >= 2 and d_x >= 1 are required")
    limit = len(TONE_CYCLES) if kind == "tones" else 3
    if not 1 <= n_classes <= limit:
        raise DomainError(f"{kind} supports 1..{limit} classes, got {n_classes}")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    samples, labels = [], []
    for c in range(n_classes):
        for _ in range(n_per_class):
            if kind == "tones":
                base = np.stack([
                    np.sin(2 * np.pi * TONE_CYCLES[c] * t / length + k * np.pi / 4) for k in range(d_x)
                ])
            elif kind == "shapes":
                a = rng.integers(length // 8, length // 3)
                b = a + rng.integers(length // 4, length // 2)
                env = (_bell, _funnel, _cylinder)[c](t, a, b)
                base = np.stack([6.0 * env for _ in range(d_x)])
            else:
                u = t / (length - 1)
                warped = u ** (1.0 + 0.6 * c)
                base = np.stack([np.sin(np.pi * warped) ** 2 * 4.0 for _ in range(d_x)])
            samples.append(base + noise_sigma * rng.standard_normal(base.shape))
            labels.append(c)
    meta = {
        "name": f"synthetic-{kind}",
        "kind": kind,
        "noise_sigma": noise_sigma,
        "seed": seed,
        "znormalized": False,
    }
    if kind == "tones":
        meta["cycles"] = list(TONE_CYCLES[:n_classes])
    return Dataset(np.stack(samples), np.array(labels, dtype=np.int64), meta)


# ---------------------------------------------------------------------------
# splitting


def _boundaries(n: int, fractions: Sequence[float]) -> list[int]:
    cum = np.cumsum(fractions)
    return [int(math.floor(c * n + 0.5)) for c in cum[:-1]] + [n]


def split(dataset: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0, stratified: bool = True):
    """Seeded (train, val, test) split; disjoint and exhaustive."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DomainError(f"fractions must be three non-negative values summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[], [], []]
    if stratified and dataset.labels is not None:
        groups = [np.flatnonzero(dataset.labels == c) for c in np.unique(dataset.labels)]
    else:
        groups = [np.arange(len(dataset))]
    for g in groups:
        g = rng.permutation(g)
        start = 0
        for k, stop in enumerate(_boundaries(len(g), fractions)):
            parts[k].extend(g[start:stop].tolist())
            start = stop
    return tuple(dataset.subset(np.sort(np.array(p, dtype=np.int64))) for p in parts)


def with_metadata(dataset: Dataset, **updates) -> Dataset:
    return replace(dataset, metadata={**dataset.metadata, **updates})
