"""Frame sequences: the video clips everything else operates on.

Frames are (N, H, W, 3) float64 arrays with values in [0, 1]. Disk formats
are binary P6 PPM (8-bit, portable) and FTNS tensors (lossless float).
"""

from __future__ import annotations

import glob
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FrescoIOError, require
from .ftns import read_ftns, write_ftns
from .ppm import read_ppm, write_ppm

_FRAME_SUFFIXES = (".ppm", ".ftns")


@dataclass
class FrameSequence:
    """An ordered stack of same-sized RGB frames plus playback metadata."""

    frames: np.ndarray
    frame_rate: float = 8.0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.frames, dtype=np.float64))
        require(arr.ndim == 4 and arr.shape[-1] == 3, f"frames must be (N, H, W, 3), got {arr.shape}")
        require(arr.shape[0] >= 1, "need at least one frame")
        require(bool(np.isfinite(arr).all()), "frame values must be finite")
        require(bool((arr >= 0.0).all() and (arr <= 1.0).all()), "frame values must lie in [0, 1]")
        require(self.frame_rate > 0, "frame_rate must be positive")
        arr.setflags(write=False)
        self.frames = arr

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def __len__(self) -> int:
        return self.n_frames

    def __getitem__(self, i: int) -> np.ndarray:
        return self.frames[i]


@dataclass
class StructureMap:
    """Per-frame edge-strength maps in [0, 1], the conditioning signal."""

    maps: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.maps, dtype=np.float64))
        require(arr.ndim == 3, f"structure maps must be (N, H, W), got {arr.shape}")
        require(bool(np.isfinite(arr).all()), "structure values must be finite")
        arr.setflags(write=False)
        self.maps = arr


def _frame_files(directory_or_pattern: str | Path) -> list[Path]:
    p = Path(directory_or_pattern)
    if p.is_dir():
        files = [f for f in p.iterdir() if f.suffix.lower() in _FRAME_SUFFIXES]
        named = [f for f in files if f.stem.startswith("frame_")]
        if named:  # dirs mixing frames with flow/mask tensors stay loadable
            files = named
    else:
        files = [Path(f) for f in glob.glob(str(directory_or_pattern))]
    return sorted(files, key=lambda f: f.name)


def load_frames(directory_or_pattern: str | Path, frame_rate: float = 8.0) -> FrameSequence:
    """Read every frame file under a directory (or matching a glob pattern).

    Files are ordered by lexicographic name. PPM pixels come back as
    value/255; FTNS frames must already be (H, W, 3) floats in [0, 1].
    """
    files = _frame_files(directory_or_pattern)
    if not files:
        raise FrescoIOError(f"no frames found under {directory_or_pattern}")
    loaded = []
    for f in files:
        if f.suffix.lower() == ".ftns":
            arr = read_ftns(f)
            if arr.ndim != 3 or arr.shape[-1] != 3:
                raise ContractError(f"{f}: expected an (H, W, 3) frame tensor, got shape {arr.shape}")
        else:
            arr = read_ppm(f)
        loaded.append(arr)
    shapes = {a.shape for a in loaded}
    if len(shapes) > 1:
        raise ContractError(f"frame dimension mismatch under {directory_or_pattern}: {sorted(shapes)}")
    return FrameSequence(np.stack(loaded), frame_rate=frame_rate)


def save_frames(seq: FrameSequence, directory: str | Path, fmt: str = "ppm") -> list[Path]:
    """Write one file per frame (frame_00000.ppm, ...); returns the paths."""
    require(fmt in ("ppm", "ftns"), f"unknown frame format {fmt!r}")
    out_dir = Path(directory)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FrescoIOError(f"cannot create output directory {out_dir}: {exc}") from exc
    paths = []
    for i in range(seq.n_frames):
        path = out_dir / f"frame_{i:05d}.{fmt}"
        if fmt == "ppm":
            write_ppm(path, seq.frames[i])
        else:
            write_ftns(path, seq.frames[i])
        paths.append(path)
    return paths


def _sobel_pair(channel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(channel, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    return gx, gy


def extract_structure(frame: np.ndarray) -> np.ndarray:
    """Edge-strength map of one frame: 3x3 Sobel magnitude on luminance.

    Replicate padding at the border; the result is scaled by its own max so
    the strongest edge sits at 1.0 (an all-constant frame stays all zero).
    """
    arr = np.asarray(frame, dtype=np.float64)
    require(arr.ndim == 3 and arr.shape[-1] == 3, f"frame must be (H, W, 3), got {arr.shape}")
    luma = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    gx, gy = _sobel_pair(luma)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    return mag


def structure_maps(seq: FrameSequence) -> StructureMap:
    return StructureMap(np.stack([extract_structure(seq.frames[i]) for i in range(seq.n_frames)]))
