"""Central finite-difference validation of analytic gradients.

The checker perturbs input coordinates one at a time, evaluates the scalar
function twice, and compares the resulting numeric gradient against the one
produced by the reverse-mode pass. This is the independent oracle every
differentiable block in the package is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Tensor

__all__ = ["GradCheckReport", "grad_check", "scale_with_wrong_grad"]


@dataclass
class GradCheckReport:
    rel_error: float
    tol: float
    passed: bool
    checked: int
    max_abs_diff: float
    per_input: list[float] = field(default_factory=list)

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"{status}: rel_error={self.rel_error:.3e} (tol {self.tol:.1e}, "
                f"{self.checked} coords, max |a-n|={self.max_abs_diff:.3e})")


def _numeric_grad(f: Callable[[], Tensor], buf: np.ndarray,
                  coords: np.ndarray, h: float) -> np.ndarray:
    flat = buf.reshape(-1)
    out = np.empty(coords.size)
    for k, idx in enumerate(coords):
        orig = flat[idx]
        flat[idx] = orig + h
        hi = float(f().data)
        flat[idx] = orig - h
        lo = float(f().data)
        flat[idx] = orig
        out[k] = (hi - lo) / (2.0 * h)
    return out


def grad_check(f: Callable[..., Tensor], inputs: Tensor | Sequence[Tensor],
               h: float = 1e-5, tol: float = 1e-4,
               max_coords_per_input: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic and central-difference gradients of ``f``.

    ``f`` is called with the given tensors and must return a scalar. The
    relative error is ``||a - n||_2 / max(||a||_2 + ||n||_2, 1e-12)`` over
    the checked coordinates (all of them, or a seeded random subset when
    ``max_coords_per_input`` caps the work).
    """
    if h <= 0:
        raise ContractError("grad_check requires h > 0")
    tensors = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    for t in tensors:
        t.requires_grad = True
        t.grad = None

    loss = f(*tensors)
    if loss.data.size != 1:
        raise ContractError(f"grad_check target must be scalar, got shape {loss.shape}")
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t in tensors:
        t.grad = None

    rng = rng or np.random.default_rng(0)
    diffs, a_all, n_all = [], [], []
    checked = 0
    per_input = []
    for t, a in zip(tensors, analytic):
        n_coords = t.size
        if max_coords_per_input is not None and n_coords > max_coords_per_input:
            coords = rng.choice(n_coords, size=max_coords_per_input, replace=False)
            coords.sort()
        else:
            coords = np.arange(n_coords)
        numeric = _numeric_grad(lambda: f(*tensors), t.data, coords, h)
        a_sel = a.reshape(-1)[coords]
        denom = max(np.linalg.norm(a_sel) + np.linalg.norm(numeric), 1e-12)
        per_input.append(float(np.linalg.norm(a_sel - numeric) / denom))
        diffs.append(np.abs(a_sel - numeric))
        a_all.append(a_sel)
        n_all.append(numeric)
        checked += coords.size

    a_cat = np.concatenate(a_all)
    n_cat = np.concatenate(n_all)
    denom = max(np.linalg.norm(a_cat) + np.linalg.norm(n_cat), 1e-12)
    rel = float(np.linalg.norm(a_cat - n_cat) / denom)
    return GradCheckReport(
        rel_error=rel, tol=tol, passed=rel < tol, checked=checked,
        max_abs_diff=float(np.concatenate(diffs).max()) if checked else 0.0,
        per_input=per_input)


def scale_with_wrong_grad(x: Tensor, factor: float = 2.0) -> Tensor:
    """Scales by ``factor`` but reports a 10%-off gradient.

    Negative control for the checker: any check through this op must fail.
    """
    return Tensor._node(x.data * factor, (x,), lambda g: (g * factor * 1.1,), "bad_scale")
