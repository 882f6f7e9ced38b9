"""Multi-head self-attention encoder over the token sequence.

Each layer computes per-head attention softmax(Q K^T / sqrt(d)) V, merges the
heads through an output projection with a residual from the layer input, and
then feeds a layer-normalized copy through a GELU MLP with a second residual:

    msa = z + concat(head_1 .. head_M) W
    z'  = mlp(layer_norm(msa)) + msa

Layer norm is applied only in front of the MLP; an optional
``pre_ln_attention`` flag additionally normalizes the attention input, which
is the more common encoder arrangement, kept switchable for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Module, Tensor, concat, gelu, layer_norm, linear, softmax


@dataclass
class EncoderConfig:
    embed_dim: int = 16
    layers: int = 2
    heads: int = 2
    mlp_ratio: float = 2.0
    qkv_bias: bool = False
    pre_ln_attention: bool = False

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("encoder needs at least one layer")
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


def self_attention(z: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                   bq: Tensor | None = None, bk: Tensor | None = None,
                   bv: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """One attention head; returns (output rows, attention matrix)."""
    q = linear(z, wq, bq)
    k = linear(z, wk, bk)
    v = linear(z, wv, bv)
    scores = (q @ k.T) / np.sqrt(q.shape[1])
    attn = softmax(scores, axis=-1)
    return attn @ v, attn


class EncoderLayer(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        c, d, m = config.embed_dim, config.head_dim, config.heads
        init = lambda *shape: Tensor(rng.normal(0.0, 0.02, shape), requires_grad=True)
        self.wq = [init(c, d) for _ in range(m)]
        self.wk = [init(c, d) for _ in range(m)]
        self.wv = [init(c, d) for _ in range(m)]
        if config.qkv_bias:
            zero = lambda: Tensor(np.zeros(d), requires_grad=True)
            self.bq = [zero() for _ in range(m)]
            self.bk = [zero() for _ in range(m)]
            self.bv = [zero() for _ in range(m)]
        else:
            self.bq = self.bk = self.bv = [None] * m
        self.proj = init(m * d, c)
        hidden = int(round(c * config.mlp_ratio))
        self.mlp_w1 = init(c, hidden)
        self.mlp_b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.mlp_w2 = init(hidden, c)
        self.mlp_b2 = Tensor(np.zeros(c), requires_grad=True)
        self.ln_gain = Tensor(np.ones(c), requires_grad=True)
        self.ln_bias = Tensor(np.zeros(c), requires_grad=True)
        if config.pre_ln_attention:
            self.ln_attn_gain = Tensor(np.ones(c), requires_grad=True)
            self.ln_attn_bias = Tensor(np.zeros(c), requires_grad=True)

    def forward(self, z: Tensor, collect_attention: bool = False):
        attn_in = z
        if self.config.pre_ln_attention:
            attn_in = layer_norm(z, self.ln_attn_gain, self.ln_attn_bias)
        heads, maps = [], []
        for m in range(self.config.heads):
            out, attn = self_attention(attn_in, self.wq[m], self.wk[m], self.wv[m],
                                       self.bq[m], self.bk[m], self.bv[m])
            heads.append(out)
            if collect_attention:
                maps.append(attn.data.copy())
        msa = z + concat(heads, axis=1) @ self.proj
        normed = layer_norm(msa, self.ln_gain, self.ln_bias)
        hidden = gelu(linear(normed, self.mlp_w1, self.mlp_b1))
        z_next = linear(hidden, self.mlp_w2, self.mlp_b2) + msa
        return (z_next, maps) if collect_attention else (z_next, None)


class Encoder(Module):
    """Stack of layers; keeps every intermediate token matrix for the decoder."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.layers_ = [EncoderLayer(config, rng) for _ in range(config.layers)]

    def encode(self, z0: Tensor, collect_attention: bool = False):
        """Returns ([z_1 .. z_L], attention maps or None).

        Attention maps, when collected, are a list per layer of per-head
        (N+1, N+1) arrays, detached from the graph.
        """
        outputs: list[Tensor] = []
        all_maps: list[list[np.ndarray]] | None = [] if collect_attention else None
        z = z0
        for layer in self.layers_:
            z, maps = layer.forward(z, collect_attention)
            outputs.append(z)
            if collect_attention:
                all_maps.append(maps)
        return outputs, all_maps
