"""Per-layer attention maps feeding the fusion decoder.

For each encoder layer's patch tokens Z (the global token is dropped first,
since everything downstream is spatial):

  * token attention: project Z to queries/keys/values with per-token linear
    maps (1x1 convolutions over the token grid) and apply softmax(Q K^T) V.
    No 1/sqrt(d) scaling here, unlike the encoder heads.
  * gram attention: softmax(Z Z^T) Z, a parameter-free token-similarity
    rewiring of the same features.

Both return matrices shaped like the patch-token input (N, C), so they can
be mixed with Z directly by the decoder. A variant that builds the gram
matrix over channels instead (softmax(Z^T Z), applied as Z A) is kept behind
a flag for ablation only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Module, Tensor, softmax


@dataclass
class AttentionPair:
    position: Tensor  # (N, C)
    channel: Tensor   # (N, C)


class TokenAttention(Module):
    """Learnable query/key/value projections for one encoder layer."""

    def __init__(self, channels: int, rng: np.random.Generator):
        init = lambda: Tensor(rng.normal(0.0, 0.02, (channels, channels)), requires_grad=True)
        self.wq, self.wk, self.wv = init(), init(), init()

    def forward(self, z: Tensor) -> Tensor:
        attn = softmax((z @ self.wq) @ (z @ self.wk).T, axis=-1)
        return attn @ (z @ self.wv)


def gram_attention(z: Tensor, over_channels: bool = False) -> Tensor:
    """Token-similarity attention from the gram matrix of z itself."""
    if over_channels:
        return z @ softmax(z.T @ z, axis=-1)
    return softmax(z @ z.T, axis=-1) @ z


class AttentionSkip(Module):
    """One TokenAttention per encoder layer plus the shared gram attention."""

    def __init__(self, channels: int, layers: int, rng: np.random.Generator,
                 gram_over_channels: bool = False):
        self.layers_ = [TokenAttention(channels, rng) for _ in range(layers)]
        self.gram_over_channels = gram_over_channels

    def forward(self, patch_tokens: Tensor, layer_index: int) -> AttentionPair:
        return AttentionPair(
            position=self.layers_[layer_index].forward(patch_tokens),
            channel=gram_attention(patch_tokens, self.gram_over_channels))

    def forward_all(self, patch_token_list: list[Tensor]) -> list[AttentionPair]:
        return [self.forward(z, i) for i, z in enumerate(patch_token_list)]
