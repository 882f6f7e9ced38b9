"""Standard monocular depth error suite with median scaling and capping.

All seven numbers are computed over a validity mask after (optionally)
rescaling the prediction by median(gt)/median(pred) and clamping both maps
to [1e-3, cap]:

    abs_rel  = mean(|d - g| / g)
    sq_rel   = mean((d - g)^2 / g)
    rmse     = sqrt(mean((d - g)^2))
    rmse_log = sqrt(mean((log d - log g)^2))
    delta_k  = fraction with max(d/g, g/d) < 1.25^k,  k = 1, 2, 3
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError

CSV_HEADER = "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3"

DEPTH_FLOOR = 1e-3


@dataclass
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def csv_row(self) -> str:
        vals = [self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                self.delta1, self.delta2, self.delta3]
        return ",".join(f"{v:.6f}" for v in vals)

    def as_tuple(self) -> tuple:
        return (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                self.delta1, self.delta2, self.delta3)


def evaluate(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None,
             cap: float = 80.0, median_scale: bool = True) -> MetricsReport:
    """Score a predicted depth map against ground truth over ``mask``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError(f"prediction shape {pred.shape} != gt shape {gt.shape}")
    mask = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != gt.shape:
        raise ContractError(f"mask shape {mask.shape} != gt shape {gt.shape}")
    if not mask.any():
        raise ContractError("metrics over an empty mask")

    d = pred[mask]
    g = gt[mask]
    if np.any(g <= 0):
        raise DataError("non-positive ground-truth depth inside the mask")
    if median_scale:
        d = d * (np.median(g) / np.median(d))
    d = np.clip(d, DEPTH_FLOOR, cap)
    g = np.clip(g, DEPTH_FLOOR, cap)

    err = d - g
    ratio = np.maximum(d / g, g / d)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err ** 2 / g)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(d) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)))


def aggregate(pairs: list[tuple[np.ndarray, np.ndarray]],
              cap: float = 80.0, median_scale: bool = True) -> MetricsReport:
    """Pixel-weighted pooling: every (pred, gt) pair scaled on its own, then
    all pixels scored as one population."""
    if not pairs:
        raise ContractError("aggregate over an empty list")
    ds, gs = [], []
    for pred, gt in pairs:
        d = np.asarray(pred, dtype=np.float64).reshape(-1)
        g = np.asarray(gt, dtype=np.float64).reshape(-1)
        if median_scale:
            d = d * (np.median(g) / np.median(d))
        ds.append(d)
        gs.append(g)
    return evaluate(np.concatenate(ds), np.concatenate(gs),
                    cap=cap, median_scale=False)
