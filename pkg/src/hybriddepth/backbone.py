"""Convolutional stem and patch embedding.

The stem is a small residual network with two stride-2 convolutions (total
stride 4). Its feature map is grouped into non-overlapping patches so the
stem stride times the grouping equals ``total_stride`` (default 16), giving
N = (H/16)*(W/16) patch tokens for an H x W image. Each patch is flattened
channel-major (channel, then row, then column within the patch), projected
by a learnable matrix, and prepended with a learnable global token; an
optional learnable positional embedding is added per token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Module, Tensor, concat, conv2d, gelu

STEM_STRIDE = 4


@dataclass
class BackboneConfig:
    in_channels: int = 3
    stem_channels: int = 16
    num_res_blocks: int = 2
    total_stride: int = 16
    embed_dim: int = 16
    pos_embed: bool = True
    max_tokens: int = 4096  # sizing bound for the positional table

    def __post_init__(self):
        if self.total_stride % STEM_STRIDE != 0:
            raise ConfigError(
                f"total_stride must be a multiple of the stem stride {STEM_STRIDE}, got {self.total_stride}")
        if self.total_stride < STEM_STRIDE:
            raise ConfigError("total_stride smaller than the stem stride")

    @property
    def patch_group(self) -> int:
        return self.total_stride // STEM_STRIDE

    @property
    def patch_dim(self) -> int:
        return self.stem_channels * self.patch_group ** 2


@dataclass
class TokenSequence:
    """Token matrix with the global token in row 0 and N patch tokens after it."""

    z: Tensor              # (N+1, embed_dim)
    grid_hw: tuple[int, int]

    @property
    def n(self) -> int:
        return self.z.shape[0] - 1

    def patch_tokens(self) -> Tensor:
        return self.z[1:]


def grid_to_tokens(grid: Tensor) -> Tensor:
    """(C, gh, gw) feature grid -> (N, C) row-major token matrix."""
    c = grid.shape[0]
    return grid.reshape(c, grid.shape[1] * grid.shape[2]).transpose(1, 0)


def tokens_to_grid(tokens: Tensor, grid_hw: tuple[int, int]) -> Tensor:
    """(N, C) row-major tokens -> (C, gh, gw) feature grid."""
    gh, gw = grid_hw
    return tokens.transpose(1, 0).reshape(tokens.shape[1], gh, gw)


def _he_conv(rng: np.random.Generator, co: int, ci: int, k: int) -> Tensor:
    std = np.sqrt(2.0 / (ci * k * k))
    return Tensor(rng.normal(0.0, std, (co, ci, k, k)), requires_grad=True)


class ResidualBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.w1 = _he_conv(rng, channels, channels, 3)
        self.b1 = Tensor(np.zeros(channels), requires_grad=True)
        self.w2 = _he_conv(rng, channels, channels, 3)
        self.b2 = Tensor(np.zeros(channels), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        h = gelu(conv2d(x, self.w1, self.b1, pad=1))
        return x + conv2d(h, self.w2, self.b2, pad=1)


class Backbone(Module):
    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        self.config = config
        c = config.stem_channels
        self.stem_w1 = _he_conv(rng, c, config.in_channels, 3)
        self.stem_b1 = Tensor(np.zeros(c), requires_grad=True)
        self.stem_w2 = _he_conv(rng, c, c, 3)
        self.stem_b2 = Tensor(np.zeros(c), requires_grad=True)
        self.blocks = [ResidualBlock(c, rng) for _ in range(config.num_res_blocks)]
        self.embed = Tensor(rng.normal(0.0, 0.02, (config.patch_dim, config.embed_dim)),
                            requires_grad=True)
        self.global_token = Tensor(rng.normal(0.0, 0.02, (1, config.embed_dim)),
                                   requires_grad=True)
        self.pos = Tensor(rng.normal(0.0, 0.02, (config.max_tokens + 1, config.embed_dim)),
                          requires_grad=True) if config.pos_embed else None

    def stem_forward(self, image: Tensor) -> Tensor:
        """(3, H, W) image -> (stem_channels, H/4, W/4) feature map."""
        _, h, w = image.shape
        s = self.config.total_stride
        if h % s or w % s:
            raise ConfigError(f"image extents {h}x{w} must be divisible by {s}")
        x = gelu(conv2d(image, self.stem_w1, self.stem_b1, stride=2, pad=1))
        x = gelu(conv2d(x, self.stem_w2, self.stem_b2, stride=2, pad=1))
        for block in self.blocks:
            x = block.forward(x)
        return x

    def patchify_embed(self, fmap: Tensor) -> TokenSequence:
        """Group the feature map into patches, project, prepend the global token."""
        cfg = self.config
        c, fh, fw = fmap.shape
        g = cfg.patch_group
        if fh % g or fw % g:
            raise ConfigError(f"feature extents {fh}x{fw} must be divisible by patch group {g}")
        gh, gw = fh // g, fw // g
        n = gh * gw
        # (C, gh, g, gw, g) -> (gh, gw, C, g, g): row-major patches, channel-major content
        patches = (fmap.reshape(c, gh, g, gw, g)
                   .transpose(1, 3, 0, 2, 4)
                   .reshape(n, c * g * g))
        tokens = patches @ self.embed
        z = concat([self.global_token, tokens], axis=0)
        if self.pos is not None:
            if n > self.config.max_tokens:
                raise ConfigError(f"{n} patches exceed positional table of {cfg.max_tokens}")
            z = z + self.pos[: n + 1]
        return TokenSequence(z=z, grid_hw=(gh, gw))

    def forward(self, image: Tensor) -> TokenSequence:
        return self.patchify_embed(self.stem_forward(image))


def unpatchify(patches: Tensor, grid_hw: tuple[int, int], channels: int, group: int) -> Tensor:
    """Inverse of the patch flattening: (N, C*g*g) -> (C, gh*g, gw*g)."""
    gh, gw = grid_hw
    return (patches.reshape(gh, gw, channels, group, group)
            .transpose(2, 0, 3, 1, 4)
            .reshape(channels, gh * group, gw * group))
