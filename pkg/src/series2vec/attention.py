"""Self-attention across the members of a batch.

Every representation in a batch is one token. There is no positional
information, so permuting the batch permutes the output rows identically.
The block is pre-norm: ``H = R + MHA(LN1(R))``, ``Z = H + FFN(LN2(H))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .encoder import glorot_bound
from .errors import DomainError
from .numerics import Tensor


@dataclass
class AttentionParams:
    """Projections are stored stacked per head: (h, d_model, d_head)."""

    heads: int
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ff1: Tensor
    ff1_bias: Tensor
    ff2: Tensor
    ff2_bias: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    _names = (
        "w_q", "w_k", "w_v", "w_o", "b_o", "ff1", "ff1_bias", "ff2", "ff2_bias",
        "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
    )

    @property
    def d_model(self) -> int:
        return self.w_o.shape[1]

    @property
    def d_head(self) -> int:
        return self.w_q.shape[2]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, getattr(self, n)) for n in self._names]

    def parameters(self) -> list[Tensor]:
        return [getattr(self, n) for n in self._names]


def init_attention(d_model: int = 64, heads: int = 8, seed: int | np.random.Generator = 0, ff_mult: int = 4) -> AttentionParams:
    if d_model % heads:
        raise DomainError(f"d_model={d_model} is not divisible by heads={heads}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dh = d_model // heads

    def uni(shape, fan_in, fan_out):
        b = glorot_bound(fan_in, fan_out)
        return nx.parameter(rng.uniform(-b, b, shape))

    hidden = ff_mult * d_model
    return AttentionParams(
        heads=heads,
        w_q=uni((heads, d_model, dh), d_model, d_model),
        w_k=uni((heads, d_model, dh), d_model, d_model),
        w_v=uni((heads, d_model, dh), d_model, d_model),
        w_o=uni((d_model, d_model), d_model, d_model),
        b_o=nx.parameter(np.zeros(d_model)),
        ff1=uni((d_model, hidden), d_model, hidden),
        ff1_bias=nx.parameter(np.zeros(hidden)),
        ff2=uni((hidden, d_model), hidden, d_model),
        ff2_bias=nx.parameter(np.zeros(d_model)),
        ln1_gain=nx.parameter(np.ones(d_model)),
        ln1_bias=nx.parameter(np.zeros(d_model)),
        ln2_gain=nx.parameter(np.ones(d_model)),
        ln2_bias=nx.parameter(np.zeros(d_model)),
    )


def multi_head_attention(x, params: AttentionParams) -> tuple[Tensor, Tensor]:
    """Raw attention over rows of ``x`` (B x d_model).

    Returns the per-head outputs concatenated along features (B x d_model,
    before the output projection) and the weights (h x B x B).
    """
    x = nx.as_tensor(x)
    b = x.shape[0]
    q = nx.matmul(x, params.w_q)  # (h, B, dh)
    k = nx.matmul(x, params.w_k)
    v = nx.matmul(x, params.w_v)
    scores = nx.matmul(q, nx.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(params.d_head))
    weights = nx.softmax(scores, axis=-1)
    heads = nx.matmul(weights, v)  # (h, B, dh)
    concat = nx.transpose(heads, (1, 0, 2)).reshape(b, params.d_model)
    return concat, weights


def batch_attend(r, params: AttentionParams) -> Tensor:
    """Full transformer block over a batch of representations (B x d_model)."""
    r = nx.as_tensor(r)
    if r.ndim != 2 or r.shape[0] < 1:
        raise DomainError(f"batch_attend expects a non-empty (B, d) matrix, got {r.shape}")
    if r.shape[1] != params.d_model:
        raise DomainError(f"representation width {r.shape[1]} != attention width {params.d_model}")
    normed = nx.layer_norm(r, params.ln1_gain, params.ln1_bias)
    concat, _ = multi_head_attention(normed, params)
    h = r + nx.matmul(concat, params.w_o) + params.b_o
    normed = nx.layer_norm(h, params.ln2_gain, params.ln2_bias)
    ff = nx.relu(nx.matmul(normed, params.ff1) + params.ff1_bias)
    return h + nx.matmul(ff, params.ff2) + params.ff2_bias


def permutation_equivariance_check(r, perm, params: AttentionParams, tol: float = 1e-10) -> bool:
    """True when attending a permuted batch equals permuting the attended batch."""
    r = np.asarray(r, dtype=np.float64)
    perm = np.asarray(perm)
    if perm.ndim != 1 or perm.size != r.shape[0] or sorted(perm.tolist()) != list(range(r.shape[0])):
        raise DomainError(f"not a permutation of 0..{r.shape[0] - 1}: {perm.tolist()}")
    base = batch_attend(r, params).data
    permuted = batch_attend(r[perm], params).data
    return bool(np.max(np.abs(permuted - base[perm]), initial=0.0) <= tol)
