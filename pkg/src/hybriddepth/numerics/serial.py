"""Binary tensor and checkpoint formats.

Single tensor ("MFT1"): magic, u32 rank, u64 extents, raw little-endian
float64 payload in row-major order.

Named container ("MFC1"): magic, u32 entry count, then per entry a u16
name length, utf-8 name, and u64 absolute offset of an MFT1 blob; blobs
follow in name-sorted order so identical states serialize identically.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

TENSOR_MAGIC = b"MFT1"
CONTAINER_MAGIC = b"MFC1"


def tensor_to_bytes(array: np.ndarray) -> bytes:
    arr = np.asarray(array, dtype="<f8")
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # 0-d stays 0-d: it is already contiguous
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return header + arr.tobytes()


def tensor_from_bytes(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor; returns (array, offset past its payload)."""
    if blob[offset:offset + 4] != TENSOR_MAGIC:
        raise DataError(f"bad tensor magic at offset {offset}")
    rank, = struct.unpack_from("<I", blob, offset + 4)
    pos = offset + 8
    shape = struct.unpack_from(f"<{rank}Q", blob, pos) if rank else ()
    pos += 8 * rank
    count = int(np.prod(shape)) if rank else 1
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
    return data.reshape(shape).astype(np.float64), pos + 8 * count


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(array))


def load_tensor(path: str | Path) -> np.ndarray:
    array, _ = tensor_from_bytes(Path(path).read_bytes())
    return array


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    names = sorted(tensors)
    blobs = [tensor_to_bytes(tensors[n]) for n in names]
    manifest_size = 4 + 4
    for n in names:
        manifest_size += 2 + len(n.encode()) + 8
    out = io.BytesIO()
    out.write(CONTAINER_MAGIC)
    out.write(struct.pack("<I", len(names)))
    offset = manifest_size
    for name, blob in zip(names, blobs):
        enc = name.encode()
        out.write(struct.pack("<H", len(enc)))
        out.write(enc)
        out.write(struct.pack("<Q", offset))
        offset += len(blob)
    for blob in blobs:
        out.write(blob)
    Path(path).write_bytes(out.getvalue())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != CONTAINER_MAGIC:
        raise DataError(f"{path}: not a checkpoint container")
    count, = struct.unpack_from("<I", blob, 4)
    pos = 8
    entries = []
    for _ in range(count):
        n, = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + n].decode()
        pos += n
        offset, = struct.unpack_from("<Q", blob, pos)
        pos += 8
        entries.append((name, offset))
    return {name: tensor_from_bytes(blob, offset)[0] for name, offset in entries}
