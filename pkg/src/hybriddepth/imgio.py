"""PNG and binary PPM (P6) image I/O for unit-interval float rasters."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def save_png(path: str | Path, image: np.ndarray, bits: int = 8) -> None:
    """Write (H, W, 3) color or (H, W) grayscale floats in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    clipped = np.clip(arr, 0.0, 1.0)
    if bits == 8:
        q = np.round(clipped * 255.0).astype(np.uint8)
    elif bits == 16:
        if arr.ndim != 2:
            raise DataError("16-bit export is grayscale only")
        q = np.round(clipped * 65535.0).astype(np.uint16)  # infers mode I;16
    else:
        raise DataError(f"unsupported bit depth {bits}")
    Image.fromarray(q).save(Path(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    img = Image.open(Path(path))
    if img.mode == "I;16":
        return np.asarray(img, dtype=np.float64) / 65535.0
    if img.mode not in ("RGB", "L"):
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_ppm(path: str | Path, image: np.ndarray) -> None:
    """Binary P6, 8 bits per channel."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"PPM wants (H, W, 3), got {arr.shape}")
    q = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(q.tobytes())


def load_ppm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P6"):
        raise DataError(f"{path}: not a binary PPM")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":  # comment line
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise DataError(f"only 8-bit PPM supported, maxval={maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=pos)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0
