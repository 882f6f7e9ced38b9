"""Run configuration: one flat key-value file, full validation up front.

The file format is `section.key = value` per line, with `#` comments and
blank lines ignored. Values are parsed by the declared field type (int,
float, bool accepting true/false, or string). Unknown keys and type
mismatches are configuration errors; every cross-field constraint is checked
by ``validate`` before any command does work.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .backbone import BackboneConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .fusion_decoder import DecoderConfig
from .model import ModelConfig
from .scenes import SceneSpec


@dataclass
class ModelParams:
    stem_channels: int = 16
    num_res_blocks: int = 2
    total_stride: int = 16
    embed_dim: int = 16
    layers: int = 2
    heads: int = 2
    mlp_ratio: float = 2.0
    pos_embed: bool = True
    pre_ln_attention: bool = False
    qkv_bias: bool = False
    fusion_conv1x1: bool = False
    d_min: float = 1.0
    d_max: float = 12.0
    init_disparity: float = 0.05


@dataclass
class TrainParams:
    steps: int = 2000
    lr: float = 0.1
    momentum: float = 0.9
    smoothness_weight: float = 1e-3
    log_every: int = 25


@dataclass
class SynthParams:
    scenes: int = 8
    frames: int = 3
    height: int = 64
    width: int = 64
    planes: int = 4
    d_min: float = 2.0
    d_max: float = 9.0
    baseline: float = 0.25
    rot_degrees: float = 0.25


@dataclass
class EvalParams:
    cap: float = 80.0
    median_scale: bool = True


@dataclass
class StylizeParams:
    style: str = "pencil"
    watercolor_iterations: int = 3
    watercolor_sigma_spatial: float = 2.0
    watercolor_sigma_range: float = 0.15
    sketch_blur_sigma: float = 3.0
    shuffle_patch: int = 8


@dataclass
class ProbeParams:
    threshold: float = 0.1
    tap: str = "transformer"   # transformer | stem
    layer: int = -1
    shuffle_patch: int = 8


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelParams = field(default_factory=ModelParams)
    train: TrainParams = field(default_factory=TrainParams)
    synth: SynthParams = field(default_factory=SynthParams)
    eval: EvalParams = field(default_factory=EvalParams)
    stylize: StylizeParams = field(default_factory=StylizeParams)
    probe: ProbeParams = field(default_factory=ProbeParams)

    # ------------------------------------------------------------ schema

    def _schema(self) -> dict[str, tuple[object, str, type]]:
        table: dict[str, tuple[object, str, type]] = {
            "seed": (self, "seed", int)}
        for section_name in ("model", "train", "synth", "eval", "stylize", "probe"):
            section = getattr(self, section_name)
            for f in dataclasses.fields(section):
                table[f"{section_name}.{f.name}"] = (section, f.name, f.type)
        return table

    def set_value(self, key: str, raw: str) -> None:
        schema = self._schema()
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r}")
        obj, name, ftype = schema[key]
        tname = ftype if isinstance(ftype, str) else ftype.__name__
        try:
            if tname == "bool":
                lowered = raw.strip().lower()
                if lowered not in ("true", "false"):
                    raise ValueError
                value = lowered == "true"
            elif tname == "int":
                value = int(raw)
            elif tname == "float":
                value = float(raw)
            else:
                value = raw.strip()
        except ValueError:
            raise ConfigError(f"config key {key!r} expects {tname}, got {raw!r}") from None
        setattr(obj, name, value)

    def dump(self) -> str:
        lines = []
        for key, (obj, name, _) in sorted(self._schema().items()):
            value = getattr(obj, name)
            text = str(value).lower() if isinstance(value, bool) else str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    # -------------------------------------------------------- validation

    def validate(self) -> None:
        m, s = self.model, self.synth
        if m.embed_dim % m.heads:
            raise ConfigError(f"model.embed_dim {m.embed_dim} not divisible by model.heads {m.heads}")
        if s.height % m.total_stride or s.width % m.total_stride:
            raise ConfigError(
                f"synth extents {s.height}x{s.width} must be divisible by model.total_stride {m.total_stride}")
        if m.total_stride % 4:
            raise ConfigError("model.total_stride must be a multiple of the stem stride 4")
        if not 0 < m.d_min < m.d_max:
            raise ConfigError("need 0 < model.d_min < model.d_max")
        if not 0 < s.d_min < s.d_max:
            raise ConfigError("need 0 < synth.d_min < synth.d_max")
        if self.train.steps < 0 or self.train.lr < 0:
            raise ConfigError("train.steps and train.lr must be nonnegative")
        if self.stylize.style not in ("pencil", "watercolor", "shuffle"):
            raise ConfigError(
                f"unknown stylize.style {self.stylize.style!r}; valid: pencil, watercolor, shuffle")
        if self.probe.tap not in ("transformer", "stem"):
            raise ConfigError(f"probe.tap must be transformer or stem, got {self.probe.tap!r}")
        if s.height % self.stylize.shuffle_patch or s.width % self.stylize.shuffle_patch:
            raise ConfigError(
                f"stylize.shuffle_patch {self.stylize.shuffle_patch} must divide synth extents")

    # --------------------------------------------------------- builders

    def model_config(self) -> ModelConfig:
        m = self.model
        return ModelConfig(
            backbone=BackboneConfig(
                stem_channels=m.stem_channels, num_res_blocks=m.num_res_blocks,
                total_stride=m.total_stride, embed_dim=m.embed_dim,
                pos_embed=m.pos_embed),
            encoder=EncoderConfig(
                embed_dim=m.embed_dim, layers=m.layers, heads=m.heads,
                mlp_ratio=m.mlp_ratio, qkv_bias=m.qkv_bias,
                pre_ln_attention=m.pre_ln_attention),
            decoder=DecoderConfig(
                channels=m.embed_dim, stages=m.layers, total_stride=m.total_stride,
                d_min=m.d_min, d_max=m.d_max, fusion_conv1x1=m.fusion_conv1x1,
                init_disparity=m.init_disparity),
            seed=self.seed)

    def scene_spec(self, seed: int | None = None) -> SceneSpec:
        s = self.synth
        return SceneSpec(
            seed=self.seed if seed is None else seed,
            height=s.height, width=s.width, n_planes=s.planes,
            d_min=s.d_min, d_max=s.d_max, frames=s.frames,
            baseline=s.baseline, rot_degrees=s.rot_degrees,
            stride_divisor=self.model.total_stride)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    config = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        config.set_value(key.strip(), raw.strip())
    return config


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())
