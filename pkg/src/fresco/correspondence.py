"""Inter-frame correspondence: flows, occlusion masks, attention indices.

Conventions used throughout the package:

* A FlowField for the frame pair (i, j) lives on frame j's pixel (or
  token) grid. It is a backward-warp field: the content of target pixel p
  is found in frame i at p + flow(p). vectors[..., 0] is the column
  offset dx, vectors[..., 1] the row offset dy.
* An OcclusionMask for (i, j) lives on frame j's grid too; 1 means a
  valid correspondence into frame i exists, 0 means occluded, newly
  revealed, or out of bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import require


@dataclass
class FlowField:
    i: int
    j: int
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        require(vec.ndim == 3 and vec.shape[-1] == 2, f"flow vectors must be (H, W, 2), got {vec.shape}")
        require(bool(np.isfinite(vec).all()), "flow vectors must be finite")
        vec.setflags(write=False)
        self.vectors = vec

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]


@dataclass
class OcclusionMask:
    i: int
    j: int
    valid: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.valid))
        require(m.ndim == 2, f"mask must be 2-d, got shape {m.shape}")
        require(bool(np.isin(m, (0, 1)).all()), "mask values must be 0 or 1")
        m = m.astype(np.int64)
        m.setflags(write=False)
        self.valid = m

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass
class AttentionIndex:
    """The two token index sets driving cross-frame attention.

    unique_tokens: (frame, flat token) pairs covering frame 0 plus every
    token that has no valid correspondence into its previous frame,
    ordered frame-major then row-major.
    flow_chains: a partition of all (frame, flat token) pairs into motion
    paths; within a chain frame indices increase by exactly 1.
    """

    grid_shape: tuple[int, int]
    n_frames: int
    unique_tokens: list[tuple[int, int]]
    flow_chains: list[list[tuple[int, int]]]

    def validate(self):
        h, w = self.grid_shape
        per_frame = h * w
        frame0 = {(0, q) for q in range(per_frame)}
        require(frame0 <= set(self.unique_tokens), "unique index must cover every token of frame 0")
        seen: set[tuple[int, int]] = set()
        for chain in self.flow_chains:
            require(len(chain) >= 1, "empty chain")
            for (fa, qa), (fb, qb) in zip(chain, chain[1:]):
                require(fb == fa + 1, "chain frames must increase by exactly 1")
            for item in chain:
                require(item not in seen, f"token {item} appears in two chains")
                seen.add(item)
        require(
            len(seen) == self.n_frames * per_frame,
            f"chains cover {len(seen)} tokens, expected {self.n_frames * per_frame}",
        )


def estimate_flow(
    image_a: np.ndarray,
    image_b: np.ndarray,
    block_size: int = 8,
    radius: int = 4,
    pair: tuple[int, int] = (0, 1),
) -> FlowField:
    """Exhaustive block matching from frame b back into frame a.

    Each block of image_b is compared against every integer displacement
    within the search radius whose footprint stays inside image_a; the
    SSD-minimizing displacement wins, with ties broken by smaller squared
    magnitude and then by scan order (dy outer, dx inner, ascending).
    The block's displacement is written to all its pixels.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    require(a.shape == b.shape, f"frame shapes differ: {a.shape} vs {b.shape}")
    require(a.ndim in (2, 3), "images must be (H, W) or (H, W, C)")
    require(block_size >= 1, "block size must be >= 1")
    require(radius >= 0, "search radius must be >= 0")
    h, w = a.shape[:2]
    vec = np.zeros((h, w, 2))
    if radius == 0:
        return FlowField(pair[0], pair[1], vec)

    for by in range(0, h, block_size):
        for bx in range(0, w, block_size):
            y1, x1 = min(by + block_size, h), min(bx + block_size, w)
            block = b[by:y1, bx:x1]
            best = None
            for dy in range(-radius, radius + 1):
                sy0, sy1 = by + dy, y1 + dy
                if sy0 < 0 or sy1 > h:
                    continue
                for dx in range(-radius, radius + 1):
                    sx0, sx1 = bx + dx, x1 + dx
                    if sx0 < 0 or sx1 > w:
                        continue
                    diff = a[sy0:sy1, sx0:sx1] - block
                    key = (float(np.sum(diff * diff)), dx * dx + dy * dy)
                    if best is None or key < best[0]:
                        best = (key, dx, dy)
            vec[by:y1, bx:x1, 0] = best[1]
            vec[by:y1, bx:x1, 1] = best[2]
    return FlowField(pair[0], pair[1], vec)


def _sample_positions(flow_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h, w = flow_vec.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    sx = xs + flow_vec[..., 0]
    sy = ys + flow_vec[..., 1]
    inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    return sx, sy, inside


def _bilinear_stencil(sx, sy, h, w):
    x0 = np.clip(np.floor(sx), 0, w - 1).astype(np.int64)
    y0 = np.clip(np.floor(sy), 0, h - 1).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = np.clip(sx - x0, 0.0, 1.0)
    ty = np.clip(sy - y0, 0.0, 1.0)
    weights = ((1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty)
    corners = ((y0, x0), (y0, x1), (y1, x0), (y1, x1))
    return corners, weights


def warp(field: np.ndarray, flow: FlowField, fill: float = 0.0) -> np.ndarray:
    """Pull a field onto the flow's target grid by bilinear sampling.

    output(p) = field sampled at p + flow(p); sample points that leave the
    field's domain produce the fill value.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = flow.grid_shape
    require(f.shape[:2] == (h, w), f"field grid {f.shape[:2]} does not match flow grid {(h, w)}")
    sx, sy, inside = _sample_positions(flow.vectors)
    corners, weights = _bilinear_stencil(sx, sy, h, w)
    out = np.zeros(f.shape)
    for (cy, cx), wt in zip(corners, weights):
        term = f[cy, cx]
        out += term * (wt[..., None] if f.ndim == 3 else wt)
    if f.ndim == 3:
        out[~inside] = fill
    else:
        out = np.where(inside, out, fill)
    return out


def warp_transpose(grad_out: np.ndarray, flow: FlowField) -> np.ndarray:
    """Adjoint of warp in its field argument (fill gradient is dropped).

    Scatters each target pixel's gradient onto the bilinear stencil it
    sampled from, which is exactly the transpose of the warp matrix.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    h, w = flow.grid_shape
    require(g.shape[:2] == (h, w), f"grad grid {g.shape[:2]} does not match flow grid {(h, w)}")
    sx, sy, inside = _sample_positions(flow.vectors)
    corners, weights = _bilinear_stencil(sx, sy, h, w)
    out = np.zeros(g.shape)
    g_in = np.where(inside[..., None] if g.ndim == 3 else inside, g, 0.0)
    for (cy, cx), wt in zip(corners, weights):
        contrib = g_in * (wt[..., None] if g.ndim == 3 else wt)
        np.add.at(out, (cy, cx), contrib)
    return out


def occlusion_mask(fwd: FlowField, bwd: FlowField) -> OcclusionMask:
    """Forward-backward consistency check on the target grid of fwd.

    Pixel p is valid iff the round trip p -> p + fwd(p) -> back lands near
    p: ||fwd(p) + bwd(p + fwd(p))||^2 <= 0.01 (||fwd(p)||^2 +
    ||bwd(p+fwd(p))||^2) + 0.5. Round trips leaving the frame are invalid.
    """
    require(fwd.grid_shape == bwd.grid_shape, "flow pair must share a grid size")
    require((fwd.i, fwd.j) == (bwd.j, bwd.i), f"flow pair mismatch: {(fwd.i, fwd.j)} vs {(bwd.i, bwd.j)}")
    sx, sy, inside = _sample_positions(fwd.vectors)
    h, w = fwd.grid_shape
    corners, weights = _bilinear_stencil(sx, sy, h, w)
    back = np.zeros(fwd.vectors.shape)
    for (cy, cx), wt in zip(corners, weights):
        back += bwd.vectors[cy, cx] * wt[..., None]
    res = np.sum((fwd.vectors + back) ** 2, axis=-1)
    mag = np.sum(fwd.vectors**2, axis=-1) + np.sum(back**2, axis=-1)
    valid = inside & (res <= 0.01 * mag + 0.5)
    return OcclusionMask(fwd.i, fwd.j, valid.astype(np.int64))


def downscale_to_tokens(flow: FlowField, mask: OcclusionMask, factor: int) -> tuple[FlowField, OcclusionMask]:
    """Average-pool a pixel flow/mask pair onto the token grid.

    Flow vectors are averaged and rescaled into token-cell units; a token
    is valid only if strictly more than half of its pixels were valid.
    """
    require(factor >= 1, "factor must be >= 1")
    h, w = flow.grid_shape
    require(mask.grid_shape == (h, w), "flow and mask grids differ")
    require(h % factor == 0 and w % factor == 0, f"grid {(h, w)} not divisible by factor {factor}")
    th, tw = h // factor, w // factor
    pooled = flow.vectors.reshape(th, factor, tw, factor, 2).mean(axis=(1, 3)) / factor
    mean_valid = mask.valid.reshape(th, factor, tw, factor).mean(axis=(1, 3))
    return (
        FlowField(flow.i, flow.j, pooled),
        OcclusionMask(mask.i, mask.j, (mean_valid > 0.5).astype(np.int64)),
    )


def build_unique_index(token_masks: list[OcclusionMask]) -> list[tuple[int, int]]:
    """Frame-0 tokens plus every token invisible in its previous frame."""
    require(len(token_masks) >= 1, "need at least one consecutive-pair mask")
    h, w = token_masks[0].grid_shape
    out = [(0, q) for q in range(h * w)]
    for i, mask in enumerate(token_masks):
        require(mask.grid_shape == (h, w), "token masks must share a grid size")
        flat = mask.valid.reshape(-1)
        out.extend((i + 1, int(q)) for q in np.flatnonzero(flat == 0))
    return out


def build_flow_chains(
    token_flows: list[FlowField], token_masks: list[OcclusionMask]
) -> list[list[tuple[int, int]]]:
    """Greedily trace tokens along the flow into disjoint motion chains.

    A chain at token q of frame i moves forward by the negated backward
    flow looked up at q's own coordinates, rounds to the nearest token,
    and claims it if it is in bounds, mask-valid, and not already claimed
    by an earlier chain (chains are scanned row-major). Tokens nobody
    claims start fresh chains, so the chains partition all tokens.
    """
    require(len(token_flows) == len(token_masks) and len(token_flows) >= 1, "need flows and masks per pair")
    h, w = token_flows[0].grid_shape
    n_frames = len(token_flows) + 1
    chains: list[list[tuple[int, int]]] = [[(0, q)] for q in range(h * w)]
    active = list(range(h * w))  # chain id at each token of the current frame, -1 if none

    for i in range(n_frames - 1):
        vec = token_flows[i].vectors
        valid = token_masks[i].valid
        require(vec.shape[:2] == (h, w) and valid.shape == (h, w), "token grid size changed mid-video")
        next_active = [-1] * (h * w)
        for q in range(h * w):
            cid = active[q]
            if cid < 0:
                continue
            qy, qx = divmod(q, w)
            tx = int(np.floor(qx - vec[qy, qx, 0] + 0.5))
            ty = int(np.floor(qy - vec[qy, qx, 1] + 0.5))
            if not (0 <= tx < w and 0 <= ty < h):
                continue
            tq = ty * w + tx
            if valid[ty, tx] == 0 or next_active[tq] >= 0:
                continue
            chains[cid].append((i + 1, tq))
            next_active[tq] = cid
        for q in range(h * w):
            if next_active[q] < 0:
                next_active[q] = len(chains)
                chains.append([(i + 1, q)])
        active = next_active
    return chains


def build_attention_index(
    token_flows: list[FlowField], token_masks: list[OcclusionMask]
) -> AttentionIndex:
    h, w = token_flows[0].grid_shape
    index = AttentionIndex(
        grid_shape=(h, w),
        n_frames=len(token_flows) + 1,
        unique_tokens=build_unique_index(token_masks),
        flow_chains=build_flow_chains(token_flows, token_masks),
    )
    index.validate()
    return index
