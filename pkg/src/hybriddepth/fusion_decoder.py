"""Fusion decoder: attention-weighted skips, gated channel normalization,
progressive stage chaining, and the depth head.

Stage update, all at the 1/16 token grid resolution (inputs are (N, C)
token matrices; the convolution runs on the reassembled 2-d grid):

    fused = w_p * A_pos + w_c * A_chan + Z
    xhat  = Conv(fused) + X_prev
    s_c   = alpha_c * ||xhat[:, c]||_2 + beta_c
    out   = xhat * (1 + tanh(gamma * sqrt(C) * s / ||s||_2))

w_p and w_c start at zero so training begins from a plain skip connection;
alpha=1, beta=0, gamma=0 make the initial gate an exact identity. The first
stage consumes the shallowest encoder tap together with the deepest decoder
state (built from the last encoder layer through a residual convolution);
deeper taps refine from there.

After the last stage the tokens are reassembled to the grid and upsampled
back to image resolution by doubling stages (bilinear x2 then a 3x3
convolution), ending in a sigmoid disparity head mapped to depth on
[d_min, d_max].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention_skip import AttentionPair
from .backbone import grid_to_tokens, tokens_to_grid
from .errors import ConfigError, DimensionError
from .numerics import Module, Tensor, conv2d, gelu, upsample2x_bilinear

_NORM_EPS = 1e-12   # inside the per-channel l2 norm, keeps sqrt differentiable at 0
_CN_EPS = 1e-5      # inside the channel-normalization denominator


@dataclass
class DecoderConfig:
    channels: int = 16
    stages: int = 2
    total_stride: int = 16
    d_min: float = 1.0
    d_max: float = 10.0
    fusion_conv1x1: bool = False
    head_min_channels: int = 4
    init_disparity: float = 0.05  # starting sigmoid level of the depth head

    def __post_init__(self):
        if self.d_min <= 0 or self.d_max <= self.d_min:
            raise ConfigError(f"need 0 < d_min < d_max, got [{self.d_min}, {self.d_max}]")
        if self.total_stride < 1 or self.total_stride & (self.total_stride - 1):
            raise ConfigError(f"total_stride must be a power of two, got {self.total_stride}")
        if not 0.0 < self.init_disparity < 1.0:
            raise ConfigError("init_disparity must lie strictly inside (0, 1)")


def disparity_to_depth(sigma: Tensor, d_min: float, d_max: float) -> Tensor:
    """Map sigmoid disparity in [0, 1] to depth: 0 -> d_max, 1 -> d_min."""
    a = 1.0 / d_min - 1.0 / d_max
    b = 1.0 / d_max
    return 1.0 / (sigma * a + b)


def _he_conv(rng, co, ci, k):
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / (ci * k * k)), (co, ci, k, k)),
                  requires_grad=True)


class FusionStage(Module):
    def __init__(self, channels: int, rng: np.random.Generator, conv1x1: bool = False):
        k = 1 if conv1x1 else 3
        self.conv_w = _he_conv(rng, channels, channels, k)
        self.conv_b = Tensor(np.zeros(channels), requires_grad=True)
        self.w_pos = Tensor(np.zeros(()), requires_grad=True)
        self.w_chan = Tensor(np.zeros(()), requires_grad=True)
        self.alpha = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.gamma = Tensor(np.zeros(channels), requires_grad=True)
        self._pad = 0 if conv1x1 else 1

    def forward(self, z: Tensor, attn: AttentionPair, x_prev: Tensor,
                grid_hw: tuple[int, int]) -> Tensor:
        if z.shape != x_prev.shape:
            raise DimensionError(f"token shapes differ: {z.shape} vs {x_prev.shape}")
        fused = self.w_pos * attn.position + self.w_chan * attn.channel + z
        conv = conv2d(tokens_to_grid(fused, grid_hw), self.conv_w, self.conv_b, pad=self._pad)
        xhat = grid_to_tokens(conv) + x_prev
        gate = self._channel_gate(xhat)
        return xhat * gate

    def _channel_gate(self, xhat: Tensor) -> Tensor:
        c = xhat.shape[1]
        norm = ((xhat * xhat).sum(axis=0) + _NORM_EPS).sqrt()      # (C,)
        s = self.alpha * norm + self.beta
        cn = s * np.sqrt(c) / ((s * s).sum() + _CN_EPS).sqrt()
        return 1.0 + (self.gamma * cn).tanh()


class FusionDecoder(Module):
    def __init__(self, config: DecoderConfig, rng: np.random.Generator):
        self.config = config
        c = config.channels
        self.res_w = _he_conv(rng, c, c, 3)
        self.res_b = Tensor(np.zeros(c), requires_grad=True)
        self.stages = [FusionStage(c, rng, config.fusion_conv1x1)
                       for _ in range(config.stages)]
        ups = int(np.log2(config.total_stride))
        self.head_w, self.head_b = [], []
        ch = c
        for _ in range(ups):
            nxt = max(ch // 2, config.head_min_channels)
            self.head_w.append(_he_conv(rng, nxt, ch, 3))
            self.head_b.append(Tensor(np.zeros(nxt), requires_grad=True))
            ch = nxt
        # small weights + logit bias: the first depth map is nearly uniform
        # at init_disparity, so training starts from an unsaturated head
        self.depth_w = Tensor(0.1 * _he_conv(rng, 1, ch, 3).data, requires_grad=True)
        p = config.init_disparity
        self.depth_b = Tensor(np.full(1, np.log(p / (1.0 - p))), requires_grad=True)

    def initial_state(self, z_last: Tensor, grid_hw: tuple[int, int]) -> Tensor:
        """Deepest decoder state: last encoder tap through a residual conv."""
        g = tokens_to_grid(z_last, grid_hw)
        return grid_to_tokens(g + conv2d(g, self.res_w, self.res_b, pad=1))

    def depth_head(self, features: Tensor) -> Tensor:
        """Feature grid -> strictly positive (H, W) depth map."""
        sigma = conv2d(features, self.depth_w, self.depth_b, pad=1).sigmoid()
        depth = disparity_to_depth(sigma, self.config.d_min, self.config.d_max)
        return depth.reshape(depth.shape[1], depth.shape[2])

    def decode(self, encoder_taps: list[Tensor], attention_pairs: list[AttentionPair],
               grid_hw: tuple[int, int], trace: list | None = None,
               collect_stage_features: list | None = None) -> Tensor:
        """Chain all fusion stages over the encoder taps, then upsample.

        ``encoder_taps`` are patch-token matrices, shallowest first; stage i
        consumes tap i. ``trace``, when given, records (stage, tap id) pairs;
        ``collect_stage_features`` receives each stage's detached output.
        """
        if len(encoder_taps) != len(self.stages) or len(attention_pairs) != len(self.stages):
            raise DimensionError(
                f"expected {len(self.stages)} taps and attention pairs, "
                f"got {len(encoder_taps)} / {len(attention_pairs)}")
        x = self.initial_state(encoder_taps[-1], grid_hw)
        for i, (stage, z, attn) in enumerate(zip(self.stages, encoder_taps, attention_pairs)):
            if trace is not None:
                trace.append((i, id(z)))
            x = stage.forward(z, attn, x, grid_hw)
            if collect_stage_features is not None:
                collect_stage_features.append(x.data.copy())
        grid = tokens_to_grid(x, grid_hw)
        for w, b in zip(self.head_w, self.head_b):
            grid = gelu(conv2d(upsample2x_bilinear(grid), w, b, pad=1))
        return self.depth_head(grid)
