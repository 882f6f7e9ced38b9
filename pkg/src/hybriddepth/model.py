"""The full depth network: stem + token encoder + attention skips + decoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention_skip import AttentionSkip
from .backbone import Backbone, BackboneConfig, TokenSequence
from .encoder import Encoder, EncoderConfig
from .errors import ConfigError, DimensionError
from .fusion_decoder import DecoderConfig, FusionDecoder
from .numerics import (Module, Tensor, load_checkpoint, no_grad,
                       save_checkpoint, save_tensor)


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    seed: int = 0

    def __post_init__(self):
        if self.backbone.embed_dim != self.encoder.embed_dim:
            raise ConfigError("backbone and encoder embed_dim differ")
        if self.decoder.channels != self.encoder.embed_dim:
            raise ConfigError("decoder channels must equal embed_dim")
        if self.decoder.stages != self.encoder.layers:
            raise ConfigError("decoder needs one stage per encoder layer")
        if self.decoder.total_stride != self.backbone.total_stride:
            raise ConfigError("decoder and backbone total_stride differ")


def image_to_tensor(image) -> Tensor:
    """(H, W, 3) unit-interval raster -> (3, H, W) tensor."""
    if isinstance(image, Tensor):
        return image
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) image, got {arr.shape}")
    return Tensor(arr.transpose(2, 0, 1))


class HybridDepthNet(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.backbone = Backbone(config.backbone, rng)
        self.encoder = Encoder(config.encoder, rng)
        self.skips = AttentionSkip(config.encoder.embed_dim, config.encoder.layers, rng)
        self.decoder = FusionDecoder(config.decoder, rng)

    def forward(self, image, trace: list | None = None) -> Tensor:
        """(H, W, 3) image -> (H, W) depth; differentiable end to end."""
        tokens = self.backbone.forward(image_to_tensor(image))
        taps, _ = self.encoder.encode(tokens.z)
        patch_taps = [z[1:] for z in taps]  # decoder is spatial: drop the global token
        pairs = self.skips.forward_all(patch_taps)
        return self.decoder.decode(patch_taps, pairs, tokens.grid_hw, trace=trace)

    def predict_depth(self, image) -> np.ndarray:
        with no_grad():
            return self.forward(image).data

    # ------------------------------------------------------------- probes

    def stem_features(self, image) -> np.ndarray:
        """(C, S) stem activations: channels x flattened spatial positions."""
        with no_grad():
            fmap = self.backbone.stem_forward(image_to_tensor(image)).data
        return fmap.reshape(fmap.shape[0], -1)

    def token_features(self, image, layer: int = -1) -> np.ndarray:
        """(C, N) patch-token activations of one encoder layer."""
        with no_grad():
            tokens = self.backbone.forward(image_to_tensor(image))
            taps, _ = self.encoder.encode(tokens.z)
        return taps[layer].data[1:].T.copy()

    def attention_maps(self, image) -> list[list[np.ndarray]]:
        """Per-layer, per-head encoder attention matrices for export."""
        with no_grad():
            tokens = self.backbone.forward(image_to_tensor(image))
            _, maps = self.encoder.encode(tokens.z, collect_attention=True)
        return maps

    def embed_image(self, image) -> TokenSequence:
        with no_grad():
            return self.backbone.forward(image_to_tensor(image))

    def export_maps(self, image, out_dir: str | Path) -> list[Path]:
        """Dump every inspectable map for one image as binary tensors.

        Writes encoder attention per layer/head, both skip-attention outputs
        per layer, each fusion stage's features, and the depth map.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []

        def dump(name: str, array: np.ndarray):
            path = out / f"{name}.mft"
            save_tensor(path, array)
            written.append(path)

        with no_grad():
            tokens = self.backbone.forward(image_to_tensor(image))
            taps, attn = self.encoder.encode(tokens.z, collect_attention=True)
            for layer, per_head in enumerate(attn):
                for head, matrix in enumerate(per_head):
                    dump(f"encoder_attention_l{layer}_h{head}", matrix)
            patch_taps = [z[1:] for z in taps]
            pairs = self.skips.forward_all(patch_taps)
            for layer, pair in enumerate(pairs):
                dump(f"skip_position_l{layer}", pair.position.data)
                dump(f"skip_channel_l{layer}", pair.channel.data)
            stage_features: list[np.ndarray] = []
            depth = self.decoder.decode(patch_taps, pairs, tokens.grid_hw,
                                        collect_stage_features=stage_features)
            for i, features in enumerate(stage_features):
                dump(f"fusion_stage_{i}", features)
            dump("depth", depth.data)
        return written

    # -------------------------------------------------------- persistence

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.state_dict())

    def load(self, path: str | Path) -> None:
        self.load_state_dict(load_checkpoint(path))
