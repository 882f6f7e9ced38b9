"""Self-supervised photometric training: view synthesis by inverse warping
and the losses driving the depth network.

The pose network is replaced by ground-truth relative poses from the
synthetic scenes, so the depth architecture is the only thing being trained.
The total objective is mean min-over-sources L1 photometric error plus a
small edge-aware smoothness term on mean-normalized disparity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, NumericError
from .numerics import Tensor, gather_pixels, maximum, minimum, where
from .model import HybridDepthNet

_BIG = 1e9  # residual assigned to invalid pixels before the min-over-sources


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")


@dataclass
class Pose:
    """Rigid transform p' = R p + t, in scene units."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))) > 1e-9:
            raise DataError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise DataError("rotation determinant is not +1")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: p -> self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def flat(self) -> np.ndarray:
        """Row-major 12-vector [R | t]."""
        return np.hstack([self.rotation, self.translation[:, None]]).reshape(-1)

    @staticmethod
    def from_flat(v: np.ndarray) -> "Pose":
        m = np.asarray(v, dtype=np.float64).reshape(3, 4)
        return Pose(m[:, :3], m[:, 3])


@dataclass
class TrainSample:
    target: np.ndarray                 # (H, W, 3)
    sources: list[np.ndarray]          # each (H, W, 3)
    poses: list[Pose]                  # target -> source, one per source
    gt_depth: np.ndarray | None = None # evaluation only, never trained on

    def __post_init__(self):
        if not self.sources:
            raise ContractError("a training sample needs at least one source view")
        if len(self.sources) != len(self.poses):
            raise ContractError("one relative pose per source view required")
        for s in self.sources:
            if s.shape != self.target.shape:
                raise ContractError("all views must share extents")


def warp(source: np.ndarray | Tensor, depth: Tensor, pose: Pose,
         cam: CameraModel) -> tuple[Tensor, np.ndarray]:
    """Reconstruct the target view by sampling the source at reprojections.

    Each target pixel is back-projected with its predicted depth, moved by
    the target->source pose, projected into the source, and bilinearly
    sampled. Returns the warped image and a validity mask that is 0 where
    the reprojection leaves the source frame (or lands behind the camera).
    Differentiable in the depth (and the source, if it is a tensor).
    """
    if np.any(depth.data <= 0):
        raise DataError("warp requires strictly positive depth")
    src = source if isinstance(source, Tensor) else Tensor(source)
    h, w = depth.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rx = (xs - cam.cx) / cam.fx          # normalized camera rays (z = 1)
    ry = (ys - cam.cy) / cam.fy
    r = pose.rotation
    t = pose.translation

    px = depth * Tensor(rx)
    py = depth * Tensor(ry)
    pz = depth
    qx = r[0, 0] * px + r[0, 1] * py + r[0, 2] * pz + t[0]
    qy = r[1, 0] * px + r[1, 1] * py + r[1, 2] * pz + t[1]
    qz = r[2, 0] * px + r[2, 1] * py + r[2, 2] * pz + t[2]

    in_front = qz.data > 1e-6
    qz_safe = maximum(qz, 1e-6)
    u = qx / qz_safe * cam.fx + cam.cx
    v = qy / qz_safe * cam.fy + cam.cy

    inside = (u.data >= 0) & (u.data <= w - 1) & (v.data >= 0) & (v.data <= h - 1)
    mask = (inside & in_front).astype(np.float64)

    # clamp the sample point so out-of-frame pixels still gather valid data
    u = minimum(maximum(u, 0.0), float(w - 1))
    v = minimum(maximum(v, 0.0), float(h - 1))
    iu = np.minimum(np.floor(u.data).astype(np.int64), w - 2) if w > 1 else np.zeros_like(u.data, dtype=np.int64)
    iv = np.minimum(np.floor(v.data).astype(np.int64), h - 2) if h > 1 else np.zeros_like(v.data, dtype=np.int64)
    du = u - Tensor(iu.astype(np.float64))
    dv = v - Tensor(iv.astype(np.float64))

    def frac(x: Tensor):  # (H, W) weight -> broadcastable over channels
        return x.reshape(h, w, 1)

    w00 = frac((1.0 - du) * (1.0 - dv))
    w01 = frac(du * (1.0 - dv))
    w10 = frac((1.0 - du) * dv)
    w11 = frac(du * dv)
    warped = (w00 * gather_pixels(src, iv, iu)
              + w01 * gather_pixels(src, iv, iu + 1)
              + w10 * gather_pixels(src, iv + 1, iu)
              + w11 * gather_pixels(src, iv + 1, iu + 1))
    return warped, mask


def photometric_loss(target: np.ndarray | Tensor, warped: Tensor | list[Tensor],
                     mask: np.ndarray | list[np.ndarray]) -> Tensor:
    """Mean over valid pixels of the min-over-sources per-pixel L1 error.

    The per-pixel error is the channel mean of |target - warped|. Pixels
    valid in no source are excluded; an empty valid set is a caller error.
    """
    warped_list = warped if isinstance(warped, list) else [warped]
    mask_list = mask if isinstance(mask, list) else [mask]
    if len(warped_list) != len(mask_list):
        raise ContractError("need one mask per warped source")
    tgt = target if isinstance(target, Tensor) else Tensor(target)

    residuals = []
    any_valid = np.zeros(mask_list[0].shape, dtype=bool)
    for wimg, m in zip(warped_list, mask_list):
        if wimg.shape != tgt.shape:
            raise ContractError(f"warped shape {wimg.shape} != target shape {tgt.shape}")
        per_pixel = (wimg - tgt).abs().mean(axis=2)
        residuals.append(where(m > 0.5, per_pixel, Tensor(np.full(per_pixel.shape, _BIG))))
        any_valid |= m > 0.5
    if not any_valid.any():
        raise ContractError("photometric loss over an empty valid set")

    best = residuals[0]
    for res in residuals[1:]:
        best = minimum(best, res)
    best = where(any_valid, best, Tensor(np.zeros(best.shape)))
    return best.sum() / float(any_valid.sum())


def smoothness_loss(depth: Tensor, image: np.ndarray) -> Tensor:
    """Edge-aware first-order smoothness of mean-normalized disparity."""
    img = np.asarray(image, dtype=np.float64)
    if img.shape[:2] != depth.shape:
        raise ContractError(f"image extents {img.shape[:2]} != depth extents {depth.shape}")
    disp = 1.0 / depth
    disp = disp / disp.mean()
    dx = (disp[:, 1:] - disp[:, :-1]).abs()
    dy = (disp[1:, :] - disp[:-1, :]).abs()
    wx = np.exp(-np.abs(img[:, 1:] - img[:, :-1]).mean(axis=2))
    wy = np.exp(-np.abs(img[1:, :] - img[:-1, :]).mean(axis=2))
    return (dx * Tensor(wx)).mean() + (dy * Tensor(wy)).mean()


@dataclass
class LossBreakdown:
    photometric: float
    smoothness: float
    total: float


@dataclass
class MomentumSGD:
    """Gradient descent with classical momentum over a fixed parameter list."""

    lr: float = 0.05
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, named_params: list[tuple[str, Tensor]]) -> None:
        for name, p in named_params:
            if p.grad is None:
                continue
            v = self.velocity.get(name)
            v = self.momentum * v + p.grad if v is not None else p.grad.copy()
            self.velocity[name] = v
            p.data = p.data - self.lr * v


def _first_non_finite(pairs) -> str | None:
    for name, arr in pairs:
        if not np.all(np.isfinite(arr)):
            return name
    return None


def train_step(model: HybridDepthNet, batch: TrainSample | list[TrainSample],
               optimizer: MomentumSGD, cam: CameraModel,
               smoothness_weight: float = 1e-3) -> LossBreakdown:
    """One forward/backward/update over the batch; deterministic.

    Raises NumericError naming the first non-finite tensor if the loss or
    any parameter stops being finite.
    """
    samples = batch if isinstance(batch, list) else [batch]
    params = sorted(model.named_parameters())
    model.zero_grad()

    photo_total = 0.0
    smooth_total = 0.0
    scale = 1.0 / len(samples)
    for sample in samples:
        depth = model.forward(sample.target)
        warps, masks = [], []
        for src, pose in zip(sample.sources, sample.poses):
            wimg, m = warp(src, depth, pose, cam)
            warps.append(wimg)
            masks.append(m)
        photo = photometric_loss(sample.target, warps, masks)
        smooth = smoothness_loss(depth, sample.target)
        loss = (photo + smoothness_weight * smooth) * scale
        bad = _first_non_finite([("photometric", photo.data), ("smoothness", smooth.data)])
        if bad is not None:
            raise NumericError(f"non-finite loss component: {bad}")
        loss.backward()
        photo_total += float(photo.data) * scale
        smooth_total += float(smooth.data) * scale

    optimizer.step(params)
    bad = _first_non_finite((n, p.data) for n, p in params)
    if bad is not None:
        raise NumericError(f"non-finite parameter after update: {bad}")
    return LossBreakdown(photometric=photo_total, smoothness=smooth_total,
                         total=photo_total + smoothness_weight * smooth_total)
