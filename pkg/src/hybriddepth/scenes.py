"""Procedural multi-view scenes: textured fronto-parallel planes rendered by
ray-casting with an exact z-buffer, plus ground-truth camera trajectories.

Every scene is a stack of axis-aligned rectangles at constant world depth on
top of an infinite background plane, each carrying a smooth analytic texture
(low-frequency color waves plus soft grid lines) evaluated at the world
intersection point, so any two views of the same surface agree photometrically.
The dataset's defining property is checked at generation time: warping each
source frame through the ground-truth depth and pose must reproduce the
target almost exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .imgio import load_png, save_png
from .numerics import Tensor, no_grad, load_tensor, save_tensor
from .selfsup import CameraModel, Pose, TrainSample, photometric_loss, warp

CONSISTENCY_GATE = 0.01


@dataclass
class PlaneSpec:
    depth: float
    x0: float
    x1: float
    y0: float
    y1: float
    base_color: np.ndarray
    wave_freq: np.ndarray    # (waves, 2)
    wave_phase: np.ndarray   # (waves, 3)
    wave_amp: np.ndarray     # (waves, 3)
    grid_step: float

    def covers(self, hx: np.ndarray, hy: np.ndarray) -> np.ndarray:
        if self.x0 is None:
            return np.ones_like(hx, dtype=bool)
        return (hx >= self.x0) & (hx <= self.x1) & (hy >= self.y0) & (hy <= self.y1)

    def color(self, hx: np.ndarray, hy: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(self.base_color, hx.shape + (3,)).copy()
        for (fx, fy), phase, amp in zip(self.wave_freq, self.wave_phase, self.wave_amp):
            arg = 2.0 * np.pi * (fx * hx + fy * hy)
            out += amp * np.sin(arg[..., None] + phase)
        # soft dark grid lines give the photometric loss structure everywhere
        gx = np.cos(2.0 * np.pi * hx / self.grid_step)
        gy = np.cos(2.0 * np.pi * hy / self.grid_step)
        lines = 0.08 * (np.maximum(gx, 0.0) ** 4 + np.maximum(gy, 0.0) ** 4)
        out -= lines[..., None]
        return np.clip(out, 0.02, 0.98)


@dataclass
class SceneSpec:
    seed: int = 0
    height: int = 64
    width: int = 64
    n_planes: int = 4
    d_min: float = 2.0
    d_max: float = 9.0
    frames: int = 3
    baseline: float = 0.25
    rot_degrees: float = 0.25
    texture_waves: int = 5
    stride_divisor: int = 16

    def __post_init__(self):
        if self.d_min <= 0:
            raise ConfigError("d_min must be positive")
        if self.height % self.stride_divisor or self.width % self.stride_divisor:
            raise ConfigError(
                f"extents {self.height}x{self.width} must be divisible by {self.stride_divisor}")
        if self.frames < 1:
            raise ConfigError("need at least one frame")

    def camera(self) -> CameraModel:
        return CameraModel(fx=self.width / 2.0, fy=self.width / 2.0,
                           cx=(self.width - 1) / 2.0, cy=(self.height - 1) / 2.0)


def _rot_y(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), 0.0, np.sin(a)],
                     [0.0, 1.0, 0.0],
                     [-np.sin(a), 0.0, np.cos(a)]])


class Scene:
    """Frozen plane stack plus a camera-to-world pose per frame."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        cam = spec.camera()
        self.planes: list[PlaneSpec] = []

        def make_plane(depth, x0, x1, y0, y1):
            waves = spec.texture_waves
            # frequencies are chosen in cycles-per-pixel at the plane's depth,
            # well below Nyquist, so bilinear resampling stays faithful
            world_per_px = depth / cam.fx
            f_px = rng.uniform(0.03, 0.10, (waves, 2)) * rng.choice([-1, 1], (waves, 2))
            return PlaneSpec(
                depth=depth, x0=x0, x1=x1, y0=y0, y1=y1,
                base_color=rng.uniform(0.35, 0.65, 3),
                wave_freq=f_px / world_per_px,
                wave_phase=rng.uniform(0, 2 * np.pi, (waves, 3)),
                wave_amp=rng.uniform(0.04, 0.10, (waves, 3)),
                grid_step=rng.uniform(10.0, 16.0) * world_per_px)

        background_depth = spec.d_max * 0.95
        self.planes.append(make_plane(background_depth, None, None, None, None))
        for _ in range(spec.n_planes):
            d = rng.uniform(spec.d_min * 1.1, spec.d_max * 0.7)
            half_w = (cam.cx / cam.fx) * d      # frustum half extent at this depth
            half_h = (cam.cy / cam.fy) * d
            cx_w = rng.uniform(-0.45, 0.45) * half_w
            cy_w = rng.uniform(-0.45, 0.45) * half_h
            sx = rng.uniform(0.25, 0.55) * half_w
            sy = rng.uniform(0.25, 0.55) * half_h
            self.planes.append(make_plane(d, cx_w - sx, cx_w + sx, cy_w - sy, cy_w + sy))

        self.poses: list[Pose] = []
        direction = rng.choice([-1.0, 1.0])
        tilt = rng.uniform(-1.0, 1.0)
        for f in range(spec.frames):
            t = np.array([direction * spec.baseline * f,
                          tilt * spec.baseline * 0.4 * f,
                          0.35 * spec.baseline * f])
            self.poses.append(Pose(_rot_y(spec.rot_degrees * f), t))

    def _raycast(self, pose: Pose, xs: np.ndarray, ys: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
        """Cast one ray per (xs, ys) pixel coordinate; z-buffer over planes."""
        cam = self.spec.camera()
        ray = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy,
                        np.ones_like(xs)], axis=0)
        ray_w = np.einsum("ij,j...->i...", pose.rotation, ray)
        origin = pose.translation
        depth = np.full(xs.shape, np.inf)
        image = np.zeros(xs.shape + (3,))
        for plane in self.planes:
            rz = ray_w[2]
            lam = (plane.depth - origin[2]) / np.where(np.abs(rz) > 1e-12, rz, 1e-12)
            hx = origin[0] + lam * ray_w[0]
            hy = origin[1] + lam * ray_w[1]
            hit = (lam > 0) & plane.covers(hx, hy) & (lam < depth)
            if not hit.any():
                continue
            depth = np.where(hit, lam, depth)
            image = np.where(hit[..., None], plane.color(hx, hy), image)
        return image, depth

    def render(self, frame: int) -> tuple[np.ndarray, np.ndarray]:
        """One frame: ((H, W, 3) image, (H, W) z-buffer depth).

        Color is 2x2 supersampled to soften plane borders (both the direct
        render and a warped view then agree at edges); depth is the exact
        z-buffer at pixel centers.
        """
        spec = self.spec
        if frame >= len(self.poses):
            raise ConfigError(f"frame {frame} beyond trajectory of {len(self.poses)}")
        pose = self.poses[frame]
        h, w = spec.height, spec.width
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        _, depth = self._raycast(pose, xs, ys)
        if not np.all(np.isfinite(depth)):
            raise DataError("a pixel missed every plane; background must cover the frame")
        image = np.zeros((h, w, 3))
        for dx, dy in ((-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)):
            sub, _ = self._raycast(pose, xs + dx, ys + dy)
            image += sub
        return image / 4.0, depth

    def relative_pose(self, target_frame: int, source_frame: int) -> Pose:
        """target camera coords -> source camera coords."""
        t_pose = self.poses[target_frame]
        s_pose = self.poses[source_frame]
        return s_pose.inverse().compose(t_pose)


def render(spec: SceneSpec, frame: int) -> tuple[np.ndarray, np.ndarray]:
    return Scene(spec).render(frame)


def make_samples(scene: Scene) -> list[TrainSample]:
    """(previous, target, next) triplets with exact relative poses."""
    frames = [scene.render(f) for f in range(scene.spec.frames)]
    samples = []
    for f in range(1, scene.spec.frames - 1):
        target_img, target_depth = frames[f]
        samples.append(TrainSample(
            target=target_img,
            sources=[frames[f - 1][0], frames[f + 1][0]],
            poses=[scene.relative_pose(f, f - 1), scene.relative_pose(f, f + 1)],
            gt_depth=target_depth))
    return samples


def check_consistency(samples: list[TrainSample], cam: CameraModel) -> float:
    """Max photometric loss of ground-truth warps; the dataset gate."""
    worst = 0.0
    with no_grad():
        for sample in samples:
            depth = Tensor(sample.gt_depth)
            warps, masks = [], []
            for src, pose in zip(sample.sources, sample.poses):
                wimg, m = warp(src, depth, pose, cam)
                warps.append(wimg)
                masks.append(m)
            worst = max(worst, float(photometric_loss(sample.target, warps, masks).data))
    return worst


def make_dataset(spec: SceneSpec, n_scenes: int) -> tuple[list[TrainSample], CameraModel]:
    """n_scenes independent scenes, gated on ground-truth warp consistency."""
    if n_scenes < 1:
        raise ConfigError("n_scenes must be >= 1")
    cam = spec.camera()
    samples: list[TrainSample] = []
    for i in range(n_scenes):
        scene_spec = SceneSpec(**{**vars(spec), "seed": spec.seed + i})
        scene = Scene(scene_spec)
        scene_samples = make_samples(scene)
        worst = check_consistency(scene_samples, cam)
        if worst >= CONSISTENCY_GATE:
            raise DataError(
                f"scene {i} fails the ground-truth warp gate: {worst:.4f} >= {CONSISTENCY_GATE}")
        samples.extend(scene_samples)
    return samples, cam


# --------------------------------------------------------------------- disk

def save_dataset(root: str | Path, spec: SceneSpec, n_scenes: int) -> list[Path]:
    """Scene directories with PNG frames, MFT1 depth, and a pose manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cam = spec.camera()
    written = []
    for i in range(n_scenes):
        scene_spec = SceneSpec(**{**vars(spec), "seed": spec.seed + i})
        scene = Scene(scene_spec)
        if check_consistency(make_samples(scene), cam) >= CONSISTENCY_GATE:
            raise DataError(f"scene {i} fails the ground-truth warp gate")
        scene_dir = root / f"scene_{i:03d}"
        scene_dir.mkdir(exist_ok=True)
        lines = [f"intrinsics {cam.fx} {cam.fy} {cam.cx} {cam.cy}",
                 f"frames {scene_spec.frames}"]
        for f in range(scene_spec.frames):
            image, depth = scene.render(f)
            save_png(scene_dir / f"frame_{f:02d}.png", image)
            save_tensor(scene_dir / f"depth_{f:02d}.mft", depth)
            pose_txt = " ".join(f"{v:.17g}" for v in scene.poses[f].flat())
            lines.append(f"pose {f} {pose_txt}")
        (scene_dir / "manifest.txt").write_text("\n".join(lines) + "\n")
        written.append(scene_dir)
    return written


def load_dataset(root: str | Path) -> tuple[list[TrainSample], CameraModel]:
    root = Path(root)
    scene_dirs = sorted(d for d in root.iterdir() if d.is_dir() and d.name.startswith("scene_"))
    if not scene_dirs:
        raise DataError(f"no scene directories under {root}")
    samples: list[TrainSample] = []
    cam: CameraModel | None = None
    for scene_dir in scene_dirs:
        lines = (scene_dir / "manifest.txt").read_text().splitlines()
        poses: dict[int, Pose] = {}
        frames = 0
        for line in lines:
            parts = line.split()
            if parts[0] == "intrinsics":
                cam = CameraModel(*(float(v) for v in parts[1:5]))
            elif parts[0] == "frames":
                frames = int(parts[1])
            elif parts[0] == "pose":
                poses[int(parts[1])] = Pose.from_flat([float(v) for v in parts[2:14]])
        images = [load_png(scene_dir / f"frame_{f:02d}.png") for f in range(frames)]
        depths = [load_tensor(scene_dir / f"depth_{f:02d}.mft") for f in range(frames)]
        scene_poses = [poses[f] for f in range(frames)]
        for f in range(1, frames - 1):
            rel = lambda s: scene_poses[s].inverse().compose(scene_poses[f])
            samples.append(TrainSample(
                target=images[f], sources=[images[f - 1], images[f + 1]],
                poses=[rel(f - 1), rel(f + 1)], gt_depth=depths[f]))
    if cam is None:
        raise DataError("manifest missing intrinsics")
    return samples, cam
