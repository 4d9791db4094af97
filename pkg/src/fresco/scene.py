"""Synthetic test scenes with exact ground-truth motion.

A scene is a smoothly textured background plus rectangular sprites that
translate by a fixed per-frame displacement. Textures are low-frequency
sinusoid mixtures evaluable at real coordinates, so a sprite at a
fractional position carries the same sub-pixel phase from frame to frame.
That makes the returned backward flows exact: warping frame i by them
reproduces frame i+1 on mask-valid pixels (to float precision for integer
motion, to bilinear-interpolation error for fractional motion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correspondence import FlowField, OcclusionMask
from .errors import require
from .frames import FrameSequence
from .inifmt import Section, load_sections
from .seeding import rng_for

# Texture band limits. Frequencies at most 1/16 cycles/px and total swing
# at most ~0.2 keep bilinear resampling error well under 0.02.
_MAX_FREQ = 1.0 / 16.0
_N_WAVES = 2


@dataclass(frozen=True)
class Sprite:
    seed: int
    width: int
    height: int
    x: float
    y: float
    dx: float = 0.0
    dy: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of a synthetic clip."""

    width: int
    height: int
    n_frames: int
    background_seed: int = 0
    sprites: tuple[Sprite, ...] = ()
    frame_rate: float = 8.0

    def __post_init__(self):
        require(self.width >= 1 and self.height >= 1, "canvas must be at least 1x1")
        require(self.n_frames >= 2, "a scene needs at least 2 frames")
        for s in self.sprites:
            require(s.width >= 1 and s.height >= 1, "sprite must be at least 1x1")
            require(
                all(math.isfinite(v) for v in (s.x, s.y, s.dx, s.dy)),
                "sprite position and motion must be finite",
            )


def _texture(run_seed: int, local_seed: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Smooth RGB texture sampled at real coordinates xs, ys."""
    rng = rng_for(run_seed, "texture", local_seed)
    out = np.empty(xs.shape + (3,))
    for c in range(3):
        base = rng.uniform(0.35, 0.65)
        val = np.full(xs.shape, base)
        for _ in range(_N_WAVES):
            fx, fy = rng.uniform(-_MAX_FREQ, _MAX_FREQ, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.04, 0.1)
            val += amp * np.sin(2.0 * np.pi * (fx * xs + fy * ys) + phase)
        out[..., c] = val
    return np.clip(out, 0.0, 1.0)


def _sprite_origin(s: Sprite, t: int) -> tuple[float, float]:
    return s.x + t * s.dx, s.y + t * s.dy


def _layer_map(spec: SceneSpec, t: int, xs, ys) -> np.ndarray:
    """0 = background, k = k-th sprite (later sprites drawn on top)."""
    layer = np.zeros(xs.shape, dtype=np.int64)
    for k, s in enumerate(spec.sprites, start=1):
        ox, oy = _sprite_origin(s, t)
        inside = (xs >= ox) & (xs < ox + s.width) & (ys >= oy) & (ys < oy + s.height)
        layer[inside] = k
    return layer


def _render(spec: SceneSpec, seed: int, t: int, xs, ys) -> np.ndarray:
    img = _texture(seed, spec.background_seed, xs, ys)
    for k, s in enumerate(spec.sprites, start=1):
        ox, oy = _sprite_origin(s, t)
        inside = (xs >= ox) & (xs < ox + s.width) & (ys >= oy) & (ys < oy + s.height)
        if inside.any():
            tex = _texture(seed, s.seed, xs - ox, ys - oy)
            img[inside] = tex[inside]
    return img


def synthesize_scene(
    spec: SceneSpec, seed: int
) -> tuple[FrameSequence, list[FlowField], list[OcclusionMask]]:
    """Render the scene and return exact backward flows and validity masks.

    Flow for pair (i, i+1) lives on frame i+1's grid: each pixel stores
    minus the motion of whatever layer it shows. A pixel is mask-valid iff
    its pre-image in frame i is in the canvas and showed the same layer;
    for fractional motion every bilinear-stencil pixel of the pre-image
    must agree, so blends never mix layers.
    """
    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    frames = np.stack([_render(spec, seed, t, xs, ys) for t in range(spec.n_frames)])
    layers = [_layer_map(spec, t, xs, ys) for t in range(spec.n_frames)]

    motions = [(0.0, 0.0)] + [(s.dx, s.dy) for s in spec.sprites]
    flows: list[FlowField] = []
    masks: list[OcclusionMask] = []
    for i in range(spec.n_frames - 1):
        lay = layers[i + 1]
        vec = np.zeros((h, w, 2))
        valid = np.zeros((h, w), dtype=np.int64)
        for l, (mdx, mdy) in enumerate(motions):
            sel = lay == l
            if not sel.any():
                continue
            vec[sel, 0] = -mdx
            vec[sel, 1] = -mdy
            qx, qy = xs[sel] - mdx, ys[sel] - mdy
            col_stencil = [np.rint(qx)] if mdx == math.floor(mdx) else [np.floor(qx), np.ceil(qx)]
            row_stencil = [np.rint(qy)] if mdy == math.floor(mdy) else [np.floor(qy), np.ceil(qy)]
            ok = np.ones(qx.shape, dtype=bool)
            for sx in col_stencil:
                for sy in row_stencil:
                    px, py = sx.astype(np.int64), sy.astype(np.int64)
                    inb = (px >= 0) & (px < w) & (py >= 0) & (py < h)
                    same = np.zeros(qx.shape, dtype=bool)
                    same[inb] = layers[i][py[inb], px[inb]] == l
                    ok &= same
            valid[sel] = ok.astype(np.int64)
        flows.append(FlowField(i, i + 1, vec))
        masks.append(OcclusionMask(i, i + 1, valid))

    return FrameSequence(frames, frame_rate=spec.frame_rate), flows, masks


def _sprite_from_section(kv: dict[str, str]) -> Sprite:
    return Sprite(
        seed=int(kv.get("seed", "1")),
        width=int(kv["width"]),
        height=int(kv["height"]),
        x=float(kv.get("x", "0")),
        y=float(kv.get("y", "0")),
        dx=float(kv.get("dx", "0")),
        dy=float(kv.get("dy", "0")),
    )


def scene_from_sections(sections: list[Section]) -> SceneSpec:
    scene_kv: dict[str, str] = {}
    sprites = []
    for name, kv in sections:
        if name in ("", "scene"):
            scene_kv.update(kv)
        elif name == "sprite":
            sprites.append(_sprite_from_section(kv))
        else:
            require(False, f"unknown scene section [{name}]")
    require("width" in scene_kv and "height" in scene_kv, "scene needs width and height")
    return SceneSpec(
        width=int(scene_kv["width"]),
        height=int(scene_kv["height"]),
        n_frames=int(scene_kv.get("frames", "8")),
        background_seed=int(scene_kv.get("background_seed", "0")),
        sprites=tuple(sprites),
        frame_rate=float(scene_kv.get("frame_rate", "8.0")),
    )


def load_scene(path) -> SceneSpec:
    return scene_from_sections(load_sections(path))
