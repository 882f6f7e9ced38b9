"""Shape/texture analysis of encoder features.

Given image pairs that preserve either shape (original vs pencil sketch) or
texture statistics (original vs patch-shuffled), each feature dimension is
scored by how well its response survives the shift: the dimension's spatial
responses are pooled to one scalar per image, and the correlation is taken
across the population of pairs, separately per concept. A dimension whose
correlation over shape-preserving pairs beats its correlation over
texture-preserving pairs (and exceeds a threshold) counts as a shape
dimension, and vice versa; the two counts summarize what the encoder encodes.

Pooling before correlating matters: a texture-tuned channel keeps its pooled
response under patch shuffling even though every individual position moved,
whereas any position-wise comparison would punish the shuffle no matter what
the channel encodes.

Features are matrices of shape (dimensions, positions): channels over
flattened spatial positions for the stem, channels over patch tokens for the
transformer taps. Dimensions whose pooled response is constant across pairs
contribute zero correlation (no signal rather than an error), so dead
channels cannot poison a whole report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError

Concept = Literal["shape", "texture"]

VARIANCE_FLOOR = 1e-12


def correlation(z_a: np.ndarray, z_b: np.ndarray) -> float:
    """Correlation coefficient cov(a, b) / sqrt(var(a) var(b)) of two vectors."""
    a = np.asarray(z_a, dtype=np.float64).reshape(-1)
    b = np.asarray(z_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ContractError(f"feature lengths differ: {a.shape} vs {b.shape}")
    a_c = a - a.mean()
    b_c = b - b.mean()
    var_a = float(a_c @ a_c) / a.size
    var_b = float(b_c @ b_c) / b.size
    if var_a <= VARIANCE_FLOOR or var_b <= VARIANCE_FLOOR:
        raise DegenerateInputError(
            f"near-zero variance ({var_a:.3e}, {var_b:.3e}); correlation undefined")
    rho = float(a_c @ b_c) / a.size / np.sqrt(var_a * var_b)
    return float(np.clip(rho, -1.0, 1.0))


@dataclass
class FeaturePair:
    """Encoder responses of one image pair plus the concept it preserves."""

    z_a: np.ndarray  # (dims, positions)
    z_b: np.ndarray
    concept: Concept

    def __post_init__(self):
        self.z_a = np.atleast_2d(np.asarray(self.z_a, dtype=np.float64))
        self.z_b = np.atleast_2d(np.asarray(self.z_b, dtype=np.float64))
        if self.z_a.shape != self.z_b.shape:
            raise ContractError(f"pair shapes differ: {self.z_a.shape} vs {self.z_b.shape}")
        if self.concept not in ("shape", "texture"):
            raise ContractError(f"unknown concept {self.concept!r}")

    @staticmethod
    def from_images(encoder: Callable[[np.ndarray], np.ndarray],
                    image_a: np.ndarray, image_b: np.ndarray,
                    concept: Concept) -> "FeaturePair":
        return FeaturePair(encoder(image_a), encoder(image_b), concept)

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension spatial means of both features: two (dims,) vectors."""
        return self.z_a.mean(axis=1), self.z_b.mean(axis=1)


@dataclass
class BiasReport:
    shape_count: int
    texture_count: int
    mean_rho_shape: np.ndarray    # per dimension
    mean_rho_texture: np.ndarray
    assignment: list[str]         # "shape" | "texture" | "none" per dimension

    @property
    def dimensionality(self) -> int:
        return len(self.assignment)

    def csv_rows(self) -> list[str]:
        rows = ["dimension,mean_rho_shape,mean_rho_texture,assignment"]
        for i, label in enumerate(self.assignment):
            rows.append(f"{i},{self.mean_rho_shape[i]:.6f},"
                        f"{self.mean_rho_texture[i]:.6f},{label}")
        return rows


def _concept_rho(pairs: list[FeaturePair], dims: int) -> np.ndarray:
    """Per-dimension correlation of pooled responses across the pair set."""
    a = np.stack([p.pooled()[0] for p in pairs], axis=1)  # (dims, pairs)
    b = np.stack([p.pooled()[1] for p in pairs], axis=1)
    out = np.zeros(dims)
    for i in range(dims):
        try:
            out[i] = correlation(a[i], b[i])
        except DegenerateInputError:
            out[i] = 0.0
    return out


def estimate_dimensionality(pairs: Sequence[FeaturePair] | Iterable[FeaturePair],
                            threshold: float = 0.1) -> BiasReport:
    """Count shape- and texture-aligned feature dimensions.

    Per dimension, pooled responses are correlated across the pairs of each
    concept separately; argmax wins the dimension if its correlation clears
    the threshold. The across-pair estimator needs a handful of pairs per
    concept to mean anything; fewer than two is rejected.
    """
    pairs = list(pairs)
    by_concept: dict[str, list[FeaturePair]] = {"shape": [], "texture": []}
    dims = None
    for pair in pairs:
        if dims is None:
            dims = pair.z_a.shape[0]
        elif pair.z_a.shape[0] != dims:
            raise ContractError("all pairs must share feature dimensionality")
        by_concept[pair.concept].append(pair)
    if len(by_concept["shape"]) < 2 or len(by_concept["texture"]) < 2:
        raise ContractError("need at least two pairs per concept")

    mean_shape = _concept_rho(by_concept["shape"], dims)
    mean_texture = _concept_rho(by_concept["texture"], dims)
    assignment = []
    for s, t in zip(mean_shape, mean_texture):
        if s >= t and s > threshold:
            assignment.append("shape")
        elif t > s and t > threshold:
            assignment.append("texture")
        else:
            assignment.append("none")
    return BiasReport(
        shape_count=assignment.count("shape"),
        texture_count=assignment.count("texture"),
        mean_rho_shape=mean_shape,
        mean_rho_texture=mean_texture,
        assignment=assignment)
