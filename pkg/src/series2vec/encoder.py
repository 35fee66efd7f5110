"""Disjoint-convolution encoder mapping a (d_x, L) input to a K-vector.

Each layer applies a temporal convolution along time (kernel shared by every
input row) and then a spatial convolution that mixes all rows and filters at
each time step, with a rectifier after both. The first spatial convolution
collapses the d_x input rows to one, so later layers see a single row of
``filters`` feature maps. A global max over time followed by an affine map
gives a fixed-size output for any input length.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .errors import DimensionError, DomainError
from .numerics import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    filters: int = 16
    kernel_width: int = 8
    repr_dim: int = 64
    activation: str = "relu"

    def __post_init__(self):
        for name in ("layers", "filters", "kernel_width", "repr_dim"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.activation != "relu":
            raise DomainError(f"unsupported activation {self.activation!r}")


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


@dataclass
class EncoderParams:
    """Weights of one encoder branch.

    ``temporal[l]`` has shape (F, C_in, w); ``spatial[l]`` has shape
    (F, F * rows, 1) where rows is d_x for the first layer and 1 after.
    """

    config: EncoderConfig
    in_channels: int
    temporal: list[Tensor] = field(default_factory=list)
    temporal_bias: list[Tensor] = field(default_factory=list)
    spatial: list[Tensor] = field(default_factory=list)
    spatial_bias: list[Tensor] = field(default_factory=list)
    proj: Tensor | None = None
    proj_bias: Tensor | None = None

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i in range(self.config.layers):
            out += [
                (f"temporal{i}", self.temporal[i]),
                (f"temporal_bias{i}", self.temporal_bias[i]),
                (f"spatial{i}", self.spatial[i]),
                (f"spatial_bias{i}", self.spatial_bias[i]),
            ]
        out += [("proj", self.proj), ("proj_bias", self.proj_bias)]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


def init_params(cfg: EncoderConfig, d_x: int, seed: int | np.random.Generator) -> EncoderParams:
    """Glorot-uniform kernels, zero biases. Deterministic in ``seed``."""
    if d_x < 1:
        raise DomainError(f"d_x must be >= 1, got {d_x}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    f, w = cfg.filters, cfg.kernel_width
    params = EncoderParams(cfg, d_x)
    c_in, rows = 1, d_x
    for _ in range(cfg.layers):
        bound = glorot_bound(c_in * w, f * w)
        params.temporal.append(nx.parameter(rng.uniform(-bound, bound, (f, c_in, w))))
        params.temporal_bias.append(nx.parameter(np.zeros(f)))
        bound = glorot_bound(f * rows, f)
        params.spatial.append(nx.parameter(rng.uniform(-bound, bound, (f, f * rows, 1))))
        params.spatial_bias.append(nx.parameter(np.zeros(f)))
        c_in, rows = f, 1
    bound = glorot_bound(f, cfg.repr_dim)
    params.proj = nx.parameter(rng.uniform(-bound, bound, (f, cfg.repr_dim)))
    params.proj_bias = nx.parameter(np.zeros(cfg.repr_dim))
    return params


def encode(x, params: EncoderParams) -> Tensor:
    """Encode (N, d_x, L) inputs to (N, K); a single (d_x, L) input gives (K,)."""
    x = nx.as_tensor(x)
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3:
        raise DimensionError(f"encode expects (N, d_x, L) input, got {x.shape}")
    n, d_x, length = x.shape
    if d_x != params.in_channels:
        raise DomainError(f"input has {d_x} channels, encoder expects {params.in_channels}")
    cfg = params.config
    f = cfg.filters
    # h: (N, C, rows, L)
    h = x.reshape(n, 1, d_x, length)
    for i in range(cfg.layers):
        c, rows = h.shape[1], h.shape[2]
        t = nx.transpose(h, (0, 2, 1, 3)).reshape(n * rows, c, length)
        t = nx.conv1d(t, params.temporal[i], padding="same")
        t = nx.relu(t + params.temporal_bias[i].reshape(1, f, 1))
        # (N*rows, F, L) -> (N, F*rows, L) with filter-major channel order
        t = nx.transpose(t.reshape(n, rows, f, length), (0, 2, 1, 3)).reshape(n, f * rows, length)
        s = nx.conv1d(t, params.spatial[i])
        s = nx.relu(s + params.spatial_bias[i].reshape(1, f, 1))
        h = s.reshape(n, f, 1, length)
    pooled = nx.max_pool_global(h.reshape(n, f, length))
    out = nx.matmul(pooled, params.proj) + params.proj_bias
    return out.reshape(cfg.repr_dim) if single else out


# ---------------------------------------------------------------------------
# serialization: flat little-endian float64 blob + JSON sidecar


def flatten(named: list[tuple[str, Tensor]]) -> tuple[bytes, list[dict]]:
    layout, chunks, offset = [], [], 0
    for name, p in named:
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    return b"".join(chunks), layout


def unflatten(blob: bytes, layout: list[dict]) -> dict[str, np.ndarray]:
    flat = np.frombuffer(blob, dtype="<f8")
    out = {}
    for entry in layout:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + size > flat.size:
            raise DomainError(f"parameter file too short for {entry['name']}")
        out[entry["name"]] = flat[start : start + size].reshape(entry["shape"]).astype(np.float64)
    return out


def save_params(params: EncoderParams, path) -> None:
    """Write ``<path>.bin`` and ``<path>.json``."""
    path = Path(path)
    blob, layout = flatten(params.named_parameters())
    path.with_suffix(".bin").write_bytes(blob)
    meta = {"config": asdict(params.config), "in_channels": params.in_channels, "layout": layout}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_params(path) -> EncoderParams:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    arrays = unflatten(path.with_suffix(".bin").read_bytes(), meta["layout"])
    params = init_params(EncoderConfig(**meta["config"]), meta["in_channels"], 0)
    assign(params.named_parameters(), arrays)
    return params


def assign(named: list[tuple[str, Tensor]], arrays: dict[str, np.ndarray]) -> None:
    for name, p in named:
        if name not in arrays:
            raise DomainError(f"missing parameter {name!r}")
        if arrays[name].shape != p.shape:
            raise DimensionError(f"{name}: stored shape {arrays[name].shape} != expected {p.shape}")
        p.data = np.array(arrays[name], dtype=np.float64)
