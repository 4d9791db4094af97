"""Binary P6 PPM reading and writing (8-bit, maxval 255)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FrescoIOError


def write_ppm(path: str | Path, frame: np.ndarray) -> None:
    """Write an HxWx3 float frame in [0,1] as binary P6."""
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise FrescoIOError(f"PPM frames must be HxWx3, got shape {frame.shape}")
    h, w = frame.shape[:2]
    data = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(data.tobytes())
    except OSError as exc:
        raise FrescoIOError(f"cannot write frame {path}: {exc}") from exc


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P6 PPM into an HxWx3 float array in [0,1]."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FrescoIOError(f"cannot read frame {path}: {exc}") from exc
    if not blob.startswith(b"P6"):
        raise FrescoIOError(f"not a P6 PPM file: {path}")

    # Header is magic, width, height, maxval separated by whitespace;
    # '#' comments run to end of line.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FrescoIOError(f"truncated PPM header: {path}")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FrescoIOError(f"malformed PPM header: {path}") from exc
    if maxval != 255:
        raise FrescoIOError(f"unsupported PPM maxval {maxval} in {path}")
    payload = blob[pos : pos + 3 * w * h]
    if len(payload) != 3 * w * h:
        raise FrescoIOError(f"truncated PPM payload: {path}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float64) / 255.0
