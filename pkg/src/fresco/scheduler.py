"""Long-video orchestration: keyframes, batches, cyclic sampling, propagation.

Frame positions are 0-based everywhere in code; docstrings quote the
1-based counting only where a published formula is easier to recognize
that way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondence import FlowField, OcclusionMask, warp
from .errors import require
from .frames import FrameSequence


@dataclass
class KeyframePlan:
    omega: list[int]
    s_min: int
    s_max: int


@dataclass
class BatchPlan:
    """Keyframe positions grouped into overlapping batches.

    Positions index into the keyframe list, not raw frame numbers. Each
    batch after the first reuses the global first position and the
    previous batch's last position as anchors; record_anchors lists, per
    batch, the positions whose latents must be stored for later reuse.
    """

    batches: list[list[int]]
    record_anchors: list[list[int]]
    batch_size: int


@dataclass
class CyclicSchedule:
    batch_size: int
    n_key: int
    include_anchors: bool
    sets: list[list[int]]  # one sorted keyframe-index set per timestep


def select_keyframes(video: FrameSequence, s_min: int, s_max: int) -> KeyframePlan:
    """Motion-adaptive keyframe selection.

    Start from both endpoints; while some gap exceeds s_max, insert the
    frame with the largest consecutive-frame L2 difference among frames
    strictly inside oversized gaps (ties to the smallest index), then
    suppress differences within s_min of the insertion. If every eligible
    difference is zero the midpoint of the first oversized gap is inserted
    instead, so the loop always terminates.
    """
    m = video.n_frames
    require(m >= 2, "keyframe selection needs at least 2 frames")
    require(1 <= s_min <= s_max, f"need 1 <= s_min <= s_max, got ({s_min}, {s_max})")

    d = np.zeros(m)
    lo, hi = s_min + 1, m - s_min  # eligible positions, counting frames from 1
    for i in range(1, m):
        if lo <= i + 1 <= hi:
            d[i] = np.linalg.norm(video.frames[i] - video.frames[i - 1])

    omega = [0, m - 1]
    while True:
        gaps = [(a, b) for a, b in zip(omega, omega[1:]) if b - a > s_max]
        if not gaps:
            break
        candidates = [i for a, b in gaps for i in range(a + 1, b)]
        best = max(candidates, key=lambda i: (d[i], -i))
        if d[best] == 0.0:
            a, b = gaps[0]
            best = (a + b) // 2
        omega.append(best)
        omega.sort()
        left = max(0, best - s_min + 1)
        d[left : best + s_min] = 0.0
    return KeyframePlan(omega=omega, s_min=s_min, s_max=s_max)


def batch_plan(keyframe_count: int, batch_size: int) -> BatchPlan:
    """Split keyframe positions into anchored batches.

    Counting positions from 1, batch k covers {1} plus the run
    (k-1)(N-2)+2 .. k(N-2)+2, so consecutive batches share the first
    position and one boundary position. The tail batch is truncated but
    keeps both anchors.
    """
    require(batch_size >= 3, "batch size must be >= 3 to fit two anchors")
    require(keyframe_count >= 1, "need at least one keyframe")
    if keyframe_count <= batch_size:
        batch = list(range(keyframe_count))
        return BatchPlan(batches=[batch], record_anchors=[[batch[0], batch[-1]]], batch_size=batch_size)

    step = batch_size - 2
    batches = []
    k = 1
    while True:
        start, end = (k - 1) * step + 1, k * step + 1  # 0-based run bounds
        if k == 1:
            batch = list(range(0, min(end, keyframe_count - 1) + 1))
        else:
            batch = [0] + list(range(start, min(end, keyframe_count - 1) + 1))
        batches.append(batch)
        if end >= keyframe_count - 1:
            break
        k += 1
    record = [[b[0], b[-1]] for b in batches]
    return BatchPlan(batches=batches, record_anchors=record, batch_size=batch_size)


def cyclic_schedule(
    batch_size: int, n_key: int, timesteps: int, include_anchors: bool = False
) -> CyclicSchedule:
    """Keyframe index sets that rotate by one position per timestep.

    Without anchors, n_key slots start evenly spread over the batch and
    every slot advances by one (mod batch size) each timestep. With
    anchors, the first and last batch positions are always present and
    the n_key moving slots rotate over the interior positions only.
    """
    require(timesteps >= 1, "need at least one timestep")
    if include_anchors:
        require(batch_size >= 3, "anchored cycling needs an interior")
        require(1 <= n_key <= batch_size - 2, f"moving slots must fit the interior, got {n_key}")
        interior = batch_size - 2
        starts = [1 + (j * interior) // n_key for j in range(n_key)]
        sets = []
        for step in range(timesteps):
            moving = {1 + (s - 1 + step) % interior for s in starts}
            sets.append(sorted({0, batch_size - 1} | moving))
    else:
        require(2 <= n_key <= batch_size, f"need 2 <= n_key <= batch size, got {n_key}")
        starts = [(j * batch_size) // n_key for j in range(n_key)]
        sets = [sorted({(s + step) % batch_size for s in starts}) for step in range(timesteps)]
    return CyclicSchedule(batch_size=batch_size, n_key=n_key, include_anchors=include_anchors, sets=sets)


def _cosine_nn(tokens: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Index of the most-cosine-similar pool row per token row.

    Zero-norm rows get cosine 0 against everything; ties resolve to the
    smallest pool index (argmax's first hit).
    """
    def unit(x):
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        return np.where(norms == 0.0, 0.0, x / np.where(norms == 0.0, 1.0, norms))

    sims = unit(tokens) @ unit(pool).T
    return np.argmax(sims, axis=1)


def propagate_tokens(
    src_features: np.ndarray,
    edited_keyframes: np.ndarray,
    keyframe_set: list[int],
) -> np.ndarray:
    """Spread edited keyframe tokens to the other frames by NN matching.

    src_features is (N, hw, d) for all frames; edited_keyframes is
    (K, hw, d) aligned with the sorted keyframe_set. Every non-keyframe
    token takes the edited token of its nearest neighbor (cosine on
    source features) in each of the two temporally nearest keyframes,
    blended with weights proportional to inverse temporal distance.
    """
    src = np.asarray(src_features, dtype=np.float64)
    edited = np.asarray(edited_keyframes, dtype=np.float64)
    keys = sorted(keyframe_set)
    require(len(keys) >= 1, "keyframe set may not be empty")
    require(src.ndim == 3 and edited.ndim == 3, "features must be (frames, hw, d)")
    require(len(keys) == edited.shape[0], "one edited feature grid per keyframe")
    require(edited.shape[1] == src.shape[1], f"token counts differ: {edited.shape[1]} vs {src.shape[1]}")
    require(all(0 <= k < src.shape[0] for k in keys), "keyframe index out of range")

    key_pos = {k: idx for idx, k in enumerate(keys)}
    out = np.empty((src.shape[0],) + edited.shape[1:], dtype=np.float64)
    for i in range(src.shape[0]):
        if i in key_pos:
            out[i] = edited[key_pos[i]]
            continue
        left = max((k for k in keys if k < i), default=None)
        right = min((k for k in keys if k > i), default=None)
        sides = []
        for k in (left, right):
            if k is None:
                continue
            nn = _cosine_nn(src[i], src[k])
            sides.append((1.0 / abs(i - k), edited[key_pos[k]][nn]))
        total = sum(wt for wt, _ in sides)
        out[i] = sum(wt * tok for wt, tok in sides) / total
    return out


def compose_forward(flows, masks, a: int, j: int):
    """Accumulated flow/validity pulling keyframe a's content onto frame j."""
    acc = flows[a].vectors
    valid = masks[a].valid.astype(np.float64)
    for t in range(a + 1, j):
        step = flows[t]
        acc = step.vectors + np.stack(
            [warp(acc[..., 0], step, fill=0.0), warp(acc[..., 1], step, fill=0.0)], axis=-1
        )
        valid = masks[t].valid * warp(valid, step, fill=0.0)
    return acc, valid >= 0.999


def compose_backward(flows_bwd, masks_bwd, b: int, j: int):
    """Accumulated flow/validity pulling keyframe b's content down onto frame j."""
    acc = flows_bwd[b - 1].vectors
    valid = masks_bwd[b - 1].valid.astype(np.float64)
    for t in range(b - 2, j - 1, -1):
        step = flows_bwd[t]
        acc = step.vectors + np.stack(
            [warp(acc[..., 0], step, fill=0.0), warp(acc[..., 1], step, fill=0.0)], axis=-1
        )
        valid = masks_bwd[t].valid * warp(valid, step, fill=0.0)
    return acc, valid >= 0.999


def _recolor(src: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Match src's global per-channel mean/std to the target frame."""
    out = np.empty_like(src)
    for c in range(src.shape[-1]):
        s_mean, s_std = src[..., c].mean(), src[..., c].std()
        t_mean, t_std = target[..., c].mean(), target[..., c].std()
        if s_std == 0.0:
            out[..., c] = src[..., c] - s_mean + t_mean
        else:
            out[..., c] = (src[..., c] - s_mean) / s_std * t_std + t_mean
    return out


def interpolate_nonkeyframes(
    video: FrameSequence,
    edited_keyframes: np.ndarray,
    plan: KeyframePlan,
    flows_fwd: list[FlowField],
    masks_fwd: list[OcclusionMask],
    flows_bwd: list[FlowField],
    masks_bwd: list[OcclusionMask],
) -> FrameSequence:
    """Fill non-keyframes by warping both enclosing edited keyframes.

    Each interior frame blends the two edited keyframes warped along
    composed consecutive flows, weighted by inverse temporal distance and
    gated by mask validity along the chain. Pixels valid from neither
    side fall back to the source pixel recolored toward the temporally
    nearest edited keyframe. Keyframe positions pass through unchanged.
    """
    m = video.n_frames
    require(len(flows_fwd) == m - 1 and len(masks_fwd) == m - 1, "need forward flow/mask per consecutive pair")
    require(len(flows_bwd) == m - 1 and len(masks_bwd) == m - 1, "need backward flow/mask per consecutive pair")
    edited = np.asarray(edited_keyframes, dtype=np.float64)
    keys = plan.omega
    require(edited.shape[0] == len(keys), "one edited frame per keyframe")

    out = np.empty_like(video.frames)
    for idx, k in enumerate(keys):
        out[k] = edited[idx]

    for ia in range(len(keys) - 1):
        ib = ia + 1
        a, b = keys[ia], keys[ib]
        for j in range(a + 1, b):
            flow_l, ok_l = compose_forward(flows_fwd, masks_fwd, a, j)
            flow_r, ok_r = compose_backward(flows_bwd, masks_bwd, b, j)
            warped_l = warp(edited[ia], FlowField(a, j, flow_l), fill=0.0)
            warped_r = warp(edited[ib], FlowField(b, j, flow_r), fill=0.0)
            w_l = np.where(ok_l, 1.0 / (j - a), 0.0)
            w_r = np.where(ok_r, 1.0 / (b - j), 0.0)
            total = w_l + w_r
            covered = total > 0.0
            safe = np.where(covered, total, 1.0)
            blend = (w_l[..., None] * warped_l + w_r[..., None] * warped_r) / safe[..., None]
            if not covered.all():
                near = a if (j - a) <= (b - j) else b
                fallback = _recolor(video.frames[j], edited[ia if near == a else ib])
                blend = np.where(covered[..., None], blend, fallback)
            out[j] = np.clip(blend, 0.0, 1.0)
    return FrameSequence(out, frame_rate=video.frame_rate)
