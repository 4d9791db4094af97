"""Quantitative checks: warped pixel error, gram drift, feature cosine.

Absolute values here are not comparable to published benchmark tables
(different feature extractors); they are meant for directional
comparisons between runs of this pipeline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .correspondence import FlowField, OcclusionMask, warp
from .errors import require
from .frames import FrameSequence


@dataclass
class MetricReport:
    pixel_mse: float
    spat_con: float
    temp_con: float
    pixel_mse_pairs: list[float] = field(default_factory=list)
    spat_con_frames: list[float] = field(default_factory=list)
    temp_con_pairs: list[float] = field(default_factory=list)


def pixel_mse(output: FrameSequence, flows: list[FlowField], masks: list[OcclusionMask]) -> tuple[float, list[float]]:
    """Mean squared error between each frame and its warped predecessor.

    Averaged over valid-mask pixels per pair, then over pairs; pairs with
    no valid pixels are skipped with a warning. Returns (mean, per-pair).
    """
    m = output.n_frames
    require(len(flows) == m - 1 and len(masks) == m - 1, "need flow/mask per consecutive pair")
    per_pair = []
    for i in range(m - 1):
        valid = masks[i].valid.astype(bool)
        if not valid.any():
            warnings.warn(f"pixel_mse: pair ({i}, {i + 1}) has no valid pixels, skipping")
            continue
        diff = output.frames[i + 1] - warp(output.frames[i], flows[i])
        per_pair.append(float((diff[valid] ** 2).mean()))
    mean = float(np.mean(per_pair)) if per_pair else 0.0
    return mean, per_pair


def _to_tokens(features: np.ndarray) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 4:
        n, h, w, d = arr.shape
        arr = arr.reshape(n, h * w, d)
    require(arr.ndim == 3, f"features must be (N, hw, d) or (N, h, w, d), got {arr.shape}")
    return arr


def _gram(tokens: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(tokens, axis=1, keepdims=True)
    unit = np.where(norms == 0.0, 0.0, tokens / np.where(norms == 0.0, 1.0, norms))
    return unit @ unit.T


def spat_con(output_features: np.ndarray, reference_features: np.ndarray) -> tuple[float, list[float]]:
    """Mean over frames of the L1 gram-matrix gap against the reference."""
    out = _to_tokens(output_features)
    ref = _to_tokens(reference_features)
    require(out.shape == ref.shape, f"feature shapes differ: {out.shape} vs {ref.shape}")
    per_frame = [float(np.abs(_gram(out[i]) - _gram(ref[i])).sum()) for i in range(out.shape[0])]
    return float(np.mean(per_frame)), per_frame


def temp_con(output_features: np.ndarray) -> tuple[float, list[float]]:
    """Mean cosine of mean-pooled features across consecutive frames."""
    tokens = _to_tokens(output_features)
    require(tokens.shape[0] >= 2, "need at least 2 frames")
    pooled = tokens.mean(axis=1)
    per_pair = []
    for i in range(pooled.shape[0] - 1):
        na, nb = np.linalg.norm(pooled[i]), np.linalg.norm(pooled[i + 1])
        if na == 0.0 or nb == 0.0:
            warnings.warn(f"temp_con: zero-norm pooled feature at pair ({i}, {i + 1})")
            per_pair.append(0.0)
            continue
        per_pair.append(float(pooled[i] @ pooled[i + 1] / (na * nb)))
    return float(np.mean(per_pair)), per_pair


def build_report(
    output: FrameSequence,
    flows: list[FlowField],
    masks: list[OcclusionMask],
    output_features: np.ndarray,
    reference_features: np.ndarray,
) -> MetricReport:
    mse, mse_pairs = pixel_mse(output, flows, masks)
    sc, sc_frames = spat_con(output_features, reference_features)
    tc, tc_pairs = temp_con(output_features)
    return MetricReport(
        pixel_mse=mse,
        spat_con=sc,
        temp_con=tc,
        pixel_mse_pairs=mse_pairs,
        spat_con_frames=sc_frames,
        temp_con_pairs=tc_pairs,
    )


def report_lines(report: MetricReport) -> str:
    """Machine-readable key=value rendering, one metric per line."""
    lines = [
        f"pixel_mse={report.pixel_mse:.12g}",
        f"spat_con={report.spat_con:.12g}",
        f"temp_con={report.temp_con:.12g}",
    ]
    for i, v in enumerate(report.pixel_mse_pairs):
        lines.append(f"pixel_mse_pair_{i:03d}={v:.12g}")
    for i, v in enumerate(report.spat_con_frames):
        lines.append(f"spat_con_frame_{i:03d}={v:.12g}")
    for i, v in enumerate(report.temp_con_pairs):
        lines.append(f"temp_con_pair_{i:03d}={v:.12g}")
    return "\n".join(lines) + "\n"


def render_report(report: MetricReport) -> str:
    return (
        f"pixel-mse  {report.pixel_mse:.6g}\n"
        f"spat-con   {report.spat_con:.6g}\n"
        f"temp-con   {report.temp_con:.6g}\n"
    )


def write_report(report: MetricReport, path) -> None:
    Path(path).write_text(report_lines(report), encoding="utf-8")
