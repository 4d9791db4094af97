"""FTNS binary tensor format.

Layout: magic bytes ``FTNS``, u32 little-endian version (=1), u32 ndim,
ndim x u64 dims, then the row-major float32 little-endian payload.
Used for lossless-enough float I/O of frames, flows, masks and recorded
denoiser features.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FrescoIOError

MAGIC = b"FTNS"
VERSION = 1


def write_ftns(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes())
    except OSError as exc:
        raise FrescoIOError(f"cannot write tensor file {path}: {exc}") from exc


def read_ftns(path: str | Path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FrescoIOError(f"cannot read tensor file {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FrescoIOError(f"not an FTNS file: {path}")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FrescoIOError(f"unsupported FTNS version {version} in {path}")
    offset = 12
    if len(blob) < offset + 8 * ndim:
        raise FrescoIOError(f"truncated FTNS header in {path}")
    dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += 8 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = blob[offset:]
    if len(payload) != 4 * count:
        raise FrescoIOError(
            f"FTNS payload size mismatch in {path}: "
            f"expected {4 * count} bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return data.astype(np.float64)
