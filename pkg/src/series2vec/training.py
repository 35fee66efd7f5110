"""Self-supervised pretraining, supervised fine-tuning and checkpoints."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .attention import AttentionParams, batch_attend, init_attention
from .data import Dataset
from .encoder import EncoderConfig, EncoderParams, encode, flatten, glorot_bound, init_params, unflatten, assign
from .errors import ContractError, DomainError
from .loss import LossBreakdown, total_loss
from .numerics import Tensor
from .similarity import SoftDtwConfig, TargetCache
from .spectral import real_dft_magnitude

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    seed: int = 0
    use_attention: bool = True
    use_spectral: bool = True
    use_temporal: bool = True
    val_fraction: float = 0.2
    heads: int = 8

    def __post_init__(self):
        if self.batch_size < 2:
            raise DomainError(f"batch_size must be >= 2 for the pairwise loss, got {self.batch_size}")
        if not (self.use_spectral or self.use_temporal):
            raise DomainError("at least one of use_spectral / use_temporal must be enabled")
        if self.epochs < 0 or self.patience < 1:
            raise DomainError("epochs must be >= 0 and patience >= 1")
        if self.lr < 0:
            raise DomainError("lr must be >= 0")
        if not 0 <= self.val_fraction < 1:
            raise DomainError("val_fraction must lie in [0, 1)")

    @property
    def branches(self) -> tuple[str, ...]:
        return tuple(b for b, on in (("time", self.use_temporal), ("frequency", self.use_spectral)) if on)


# ---------------------------------------------------------------------------
# adaptive-moment optimizer


@dataclass
class AdamState:
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Bias-corrected Adam update. Parameters whose gradient is None are left alone.

    Parameter arrays are replaced, never written in place, so earlier
    snapshots of ``p.data`` stay valid.
    """
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} parameters but {len(grads)} gradients")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(i)
        v = state.v.get(i)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        state.m[i], state.v[i] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# model state


@dataclass
class ModelState:
    temporal: EncoderParams
    spectral: EncoderParams
    attn_temporal: AttentionParams
    attn_spectral: AttentionParams
    optimizer: AdamState = field(default_factory=AdamState)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, module in (
            ("temporal", self.temporal),
            ("spectral", self.spectral),
            ("attn_temporal", self.attn_temporal),
            ("attn_spectral", self.attn_spectral),
        ):
            out += [(f"{prefix}.{n}", p) for n, p in module.named_parameters()]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        assign(self.named_parameters(), arrays)

    def clone(self) -> "ModelState":
        return copy.deepcopy(self)


def init_state(encoder_cfg: EncoderConfig, d_x: int, train_cfg: TrainConfig) -> ModelState:
    seeds = np.random.SeedSequence(train_cfg.seed).spawn(4)
    rngs = [np.random.default_rng(s) for s in seeds]
    return ModelState(
        temporal=init_params(encoder_cfg, d_x, rngs[0]),
        spectral=init_params(encoder_cfg, d_x, rngs[1]),
        attn_temporal=init_attention(encoder_cfg.repr_dim, train_cfg.heads, rngs[2]),
        attn_spectral=init_attention(encoder_cfg.repr_dim, train_cfg.heads, rngs[3]),
    )


# ---------------------------------------------------------------------------
# pretraining


@dataclass
class PretrainResult:
    state: ModelState
    history: list[dict]
    best_epoch: int
    stopped_early: bool


ExtraLoss = Callable[[dict], Tensor]


def _uniform_samples(dataset) -> np.ndarray:
    if isinstance(dataset, Dataset):
        samples = dataset.samples
    elif isinstance(dataset, np.ndarray):
        samples = np.asarray(dataset, dtype=np.float64)
    else:
        items = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in dataset]
        if not items:
            raise DomainError("empty dataset")
        for i, x in enumerate(items):
            if x.shape != items[0].shape:
                raise DomainError(f"sample {i} has shape {x.shape}, expected {items[0].shape}")
        samples = np.stack(items)
    if samples.ndim == 2:
        samples = samples[:, None, :]
    if samples.shape[0] == 0:
        raise DomainError("empty dataset")
    return samples


def _batches(indices: np.ndarray, size: int, min_size: int = 2) -> list[np.ndarray]:
    out = [indices[i : i + size] for i in range(0, len(indices), size)]
    if out and len(out[-1]) < min_size:
        out.pop()
    return out


def batch_loss(
    state: ModelState,
    cfg: TrainConfig,
    samples: np.ndarray,
    spectra: np.ndarray,
    cache: TargetCache,
    idx: np.ndarray,
    extra_losses: Sequence[ExtraLoss] = (),
) -> LossBreakdown:
    z_t = z_f = r_t = r_f = t_t = t_f = None
    if cfg.use_temporal:
        r_t = encode(samples[idx], state.temporal)
        z_t = batch_attend(r_t, state.attn_temporal) if cfg.use_attention else r_t
        t_t = cache.batch(idx, "time")
    if cfg.use_spectral:
        r_f = encode(spectra[idx], state.spectral)
        z_f = batch_attend(r_f, state.attn_spectral) if cfg.use_attention else r_f
        t_f = cache.batch(idx, "frequency")
    ctx = {"indices": idx, "r_t": r_t, "r_f": r_f, "z_t": z_t, "z_f": z_f, "state": state}
    extra = [fn(ctx) for fn in extra_losses]
    return total_loss(z_t, t_t, z_f, t_f, extra=extra)


def pretrain(
    dataset,
    cfg: TrainConfig | None = None,
    encoder_cfg: EncoderConfig | None = None,
    dtw_cfg: SoftDtwConfig | None = None,
    state: ModelState | None = None,
    extra_losses: Sequence[ExtraLoss] = (),
    cache: TargetCache | None = None,
) -> PretrainResult:
    """Minimize the summed time/frequency similarity loss with early stopping.

    Returns the parameters from the epoch with the best validation loss
    (training loss when the validation split has fewer than 2 samples).
    """
    cfg = cfg or TrainConfig()
    encoder_cfg = encoder_cfg or EncoderConfig()
    dtw_cfg = dtw_cfg or SoftDtwConfig()
    samples = _uniform_samples(dataset)
    n = samples.shape[0]
    state = state or init_state(encoder_cfg, samples.shape[1], cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(5)[4])

    order = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    train_idx, val_idx = order[: n - n_val], order[n - n_val :]
    if len(train_idx) < 2:
        raise DomainError(f"need at least 2 training samples, got {len(train_idx)}")
    if cache is None:
        cache = TargetCache(samples, dtw_cfg, kinds=cfg.branches)
    spectra = real_dft_magnitude(samples)
    params = state.parameters()
    val_batches = _batches(val_idx, cfg.batch_size)

    history: list[dict] = []
    best_metric, best_epoch, best_arrays = np.inf, 0, state.snapshot()
    bad_epochs, stopped = 0, False
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(rng.permutation(train_idx), cfg.batch_size):
            nx.zero_grad(params)
            loss = batch_loss(state, cfg, samples, spectra, cache, idx, extra_losses)
            nx.backward(loss.total)
            adam_step(params, [p.grad for p in params], state.optimizer, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            losses.append(loss.total.item())
        nx.zero_grad(params)
        train_loss = float(np.mean(losses))
        val_loss = None
        if val_batches:
            val_loss = float(np.mean([batch_loss(state, cfg, samples, spectra, cache, b).total.item() for b in val_batches]))
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d train %.6f val %s", epoch, train_loss, val_loss)
        metric = train_loss if val_loss is None else val_loss
        if metric < best_metric:
            best_metric, best_epoch, best_arrays = metric, epoch, state.snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stopped = True
                break
    state.restore(best_arrays)
    return PretrainResult(state, history, best_epoch, stopped)


# ---------------------------------------------------------------------------
# downstream use


def _branch_inputs(samples: np.ndarray, cfg: TrainConfig):
    inputs = []
    if cfg.use_temporal:
        inputs.append(("temporal", samples))
    if cfg.use_spectral:
        inputs.append(("spectral", real_dft_magnitude(samples)))
    return inputs


def represent(samples, state: ModelState, cfg: TrainConfig) -> Tensor:
    """Differentiable concatenated representations for a batch (no attention)."""
    parts = [encode(x, getattr(state, name)) for name, x in _branch_inputs(samples, cfg)]
    return parts[0] if len(parts) == 1 else nx.concat(parts, axis=-1)


def extract_representations(dataset, state: ModelState, cfg: TrainConfig) -> np.ndarray:
    """Per-sample [r_T, r_F] for active branches; each sample is encoded on its own."""
    samples = _uniform_samples(dataset)
    return np.stack([represent(samples[i : i + 1], state, cfg).data[0] for i in range(samples.shape[0])])


@dataclass
class ClassifierHead:
    weight: Tensor
    bias: Tensor

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("head.weight", self.weight), ("head.bias", self.bias)]


def init_head(in_dim: int, n_classes: int, seed) -> ClassifierHead:
    rng = np.random.default_rng(seed)
    b = glorot_bound(in_dim, n_classes)
    return ClassifierHead(nx.parameter(rng.uniform(-b, b, (in_dim, n_classes))), nx.parameter(np.zeros(n_classes)))


def finetune(
    dataset: Dataset,
    state: ModelState,
    cfg: TrainConfig,
    epochs: int = 10,
    lr: float = 1e-4,
    n_classes: int | None = None,
) -> tuple[ModelState, ClassifierHead, list[dict]]:
    """Train encoders and a linear head jointly with cross-entropy. ``state`` is not mutated."""
    if dataset.labels is None:
        raise DomainError("fine-tuning needs labels")
    n_classes = n_classes or dataset.n_classes
    if dataset.labels.min() < 0 or dataset.labels.max() >= n_classes:
        raise DomainError(f"labels must lie in 0..{n_classes - 1}")
    state = state.clone()
    state.optimizer = AdamState()
    seeds = np.random.SeedSequence([cfg.seed, 1]).spawn(2)
    in_dim = state.temporal.config.repr_dim * len(cfg.branches)
    head = init_head(in_dim, n_classes, seeds[0])
    rng = np.random.default_rng(seeds[1])
    enc_params = []
    if cfg.use_temporal:
        enc_params += state.temporal.parameters()
    if cfg.use_spectral:
        enc_params += state.spectral.parameters()
    params = enc_params + head.parameters()
    opt = AdamState()
    history = []
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in _batches(rng.permutation(len(dataset)), cfg.batch_size, min_size=1):
            nx.zero_grad(params)
            logits = nx.matmul(represent(dataset.samples[idx], state, cfg), head.weight) + head.bias
            loss = nx.cross_entropy(logits, dataset.labels[idx])
            nx.backward(loss)
            adam_step(params, [p.grad for p in params], opt, lr, cfg.beta1, cfg.beta2, cfg.eps)
            losses.append(loss.item())
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses))})
    nx.zero_grad(params)
    return state, head, history


def predict(dataset, state: ModelState, head: ClassifierHead, cfg: TrainConfig) -> np.ndarray:
    reps = extract_representations(dataset, state, cfg)
    return np.argmax(reps @ head.weight.data + head.bias.data, axis=1)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(state: ModelState, directory, train_cfg: TrainConfig, encoder_cfg: EncoderConfig, extra: dict | None = None) -> None:
    """Write ``checkpoint.bin`` (little-endian float64) and ``checkpoint.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob, layout = flatten(state.named_parameters())
    (directory / "checkpoint.bin").write_bytes(blob)
    meta = {
        "format": "series2vec-checkpoint/1",
        "in_channels": state.temporal.in_channels,
        "encoder": asdict(encoder_cfg),
        "train": asdict(train_cfg),
        "layout": layout,
    }
    if extra:
        meta.update(extra)
    (directory / "checkpoint.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory) -> tuple[ModelState, TrainConfig, EncoderConfig, dict]:
    directory = Path(directory)
    meta_path, bin_path = directory / "checkpoint.json", directory / "checkpoint.bin"
    if not meta_path.exists() or not bin_path.exists():
        raise DomainError(f"no checkpoint in {directory}")
    meta = json.loads(meta_path.read_text())
    encoder_cfg = EncoderConfig(**meta["encoder"])
    train_cfg = TrainConfig(**meta["train"])
    state = init_state(encoder_cfg, meta["in_channels"], train_cfg)
    state.restore(unflatten(bin_path.read_bytes(), meta["layout"]))
    return state, train_cfg, encoder_cfg, meta


def write_history(history: list[dict], path) -> None:
    Path(path).write_text(json.dumps(history, indent=2) + "\n")
