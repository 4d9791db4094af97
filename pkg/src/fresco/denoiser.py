"""Seeded synthetic denoiser standing in for a pretrained U-Net.

The network is tiny but has the full hook topology the rest of the
pipeline needs: an encoder conv over latent-plus-structure channels,
decoder layers with token attention (plain or correspondence-guided, with
optional feature optimization on their inputs), per-layer capture of skip
features and Q/K projections, plug-and-play style injection of previously
captured values, DDIM inversion with recording, and a toy latent codec.
All weights are drawn once from a seeded stream; every pass is a pure
function of its inputs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .attention import (
    AttnConfig,
    QkvSet,
    efficient_cross_frame_attention,
    softmax,
    spatial_guided_attention,
    temporal_guided_attention,
)
from .diffusion import DiffusionSchedule, ddim_inversion_step, ddpm_forward_sample
from .errors import require
from .feature_opt import OptimConfig, optimize_features
from .params import FrescoParams
from .seeding import rng_for


@dataclass(frozen=True)
class DenoiserSpec:
    seed: int = 0
    n_layers: int = 3
    token_dim: int = 16
    latent_dim: int = 4
    cond_dim: int = 8
    qk_gain: float = 1.0  # sharpens attention logits; 1.0 leaves the softmax near-uniform
    feature_opt_layers: tuple[bool, ...] = ()
    attention_modes: tuple[str, ...] = ()

    def __post_init__(self):
        require(self.n_layers >= 1, "need at least one decoder layer")
        require(self.token_dim >= 1 and self.latent_dim >= 1 and self.cond_dim >= 1, "widths must be >= 1")
        require(self.qk_gain > 0, "qk_gain must be positive")
        opt = self.feature_opt_layers or (True,) * self.n_layers
        modes = self.attention_modes or ("fresco",) * self.n_layers
        require(len(opt) == self.n_layers, "one feature-opt flag per layer")
        require(len(modes) == self.n_layers and all(m in ("fresco", "self") for m in modes), "attention modes must be 'fresco' or 'self', one per layer")
        object.__setattr__(self, "feature_opt_layers", tuple(opt))
        object.__setattr__(self, "attention_modes", tuple(modes))


@dataclass
class DenoiserCapture:
    """What one forward pass recorded: per-layer inputs and projections."""

    layer_inputs: list[np.ndarray] = field(default_factory=list)
    q: list[np.ndarray] = field(default_factory=list)
    k: list[np.ndarray] = field(default_factory=list)


@dataclass
class StepRecord:
    t: int
    phi: list[np.ndarray]
    q: list[np.ndarray]
    k: list[np.ndarray]


@dataclass
class InversionRecord:
    """Per-timestep captures from a DDIM inversion run."""

    steps: list[StepRecord]

    def at(self, t: int) -> StepRecord:
        rec = self.steps[t - 1]
        require(rec.t == t, f"inversion record misordered at t={t}")
        return rec


def prompt_embedding(spec: DenoiserSpec, prompt: str | None) -> np.ndarray:
    """Seeded hash embedding; None means the null condition (zeros)."""
    if prompt is None:
        return np.zeros(spec.cond_dim)
    digest = zlib.crc32(prompt.encode("utf-8"))
    return rng_for(spec.seed, "prompt", digest).standard_normal(spec.cond_dim)


class SyntheticDenoiser:
    """Deterministic stand-in network; weights fixed by the configured seed."""

    def __init__(self, spec: DenoiserSpec = DenoiserSpec()):
        self.spec = spec
        d = spec.token_dim
        d_in = spec.latent_dim + 1  # structure map rides along as a channel
        rng = rng_for(spec.seed, "denoiser-weights")
        self.w_enc = rng.standard_normal((3, 3, d_in, d)) / np.sqrt(9.0 * d_in)
        self.b_enc = 0.1 * rng.standard_normal(d)
        self.w_cond = rng.standard_normal((spec.cond_dim, d)) / np.sqrt(spec.cond_dim)
        self.time_omega = rng.uniform(0.1, 1.0, size=spec.cond_dim)
        self.time_phase = rng.uniform(0.0, 2.0 * np.pi, size=spec.cond_dim)
        self.w_time = rng.standard_normal((spec.cond_dim, d)) / np.sqrt(spec.cond_dim)
        self.layers = []
        gain = np.sqrt(spec.qk_gain)  # applied after drawing so the weight stream is gain-independent
        for _ in range(spec.n_layers):
            layer = {name: rng.standard_normal((d, d)) / np.sqrt(d) for name in ("w_q", "w_k", "w_v", "w_o")}
            layer["w_q"] = layer["w_q"] * gain
            layer["w_k"] = layer["w_k"] * gain
            self.layers.append(layer)
        self.w_out = rng.standard_normal((d, spec.latent_dim)) / np.sqrt(d)
        self.codec = rng_for(spec.seed, "codec").standard_normal((spec.latent_dim, 3))
        self.codec_pinv = np.linalg.pinv(self.codec)

    # ---- latent codec ----------------------------------------------------

    def latent_encode(self, frame: np.ndarray) -> np.ndarray:
        """2x average-pool then the fixed channel map RGB -> latent."""
        arr = np.asarray(frame, dtype=np.float64)
        require(arr.ndim == 3 and arr.shape[-1] == 3, f"frame must be (H, W, 3), got {arr.shape}")
        hh, ww = arr.shape[:2]
        require(hh % 2 == 0 and ww % 2 == 0, f"frame size {(hh, ww)} not divisible by 2")
        pooled = arr.reshape(hh // 2, 2, ww // 2, 2, 3).mean(axis=(1, 3))
        return pooled @ self.codec.T

    def latent_decode(self, latent: np.ndarray) -> np.ndarray:
        """Channel map back to RGB, then bilinear 2x upsample."""
        lat = np.asarray(latent, dtype=np.float64)
        require(lat.ndim == 3 and lat.shape[-1] == self.spec.latent_dim, f"latent must be (h, w, {self.spec.latent_dim}), got {lat.shape}")
        rgb = lat @ self.codec_pinv.T
        h, w = rgb.shape[:2]
        ys = (np.arange(2 * h) - 0.5) / 2.0
        xs = (np.arange(2 * w) - 0.5) / 2.0
        y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
        x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
        y1 = np.minimum(y0 + 1, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        ty = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
        tx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
        top = rgb[y0][:, x0] * (1 - tx) + rgb[y0][:, x1] * tx
        bot = rgb[y1][:, x0] * (1 - tx) + rgb[y1][:, x1] * tx
        return top * (1 - ty) + bot * ty

    # ---- forward pass ----------------------------------------------------

    def _encode_stage(self, x, t, prompt, structure):
        z = np.concatenate([x, structure[..., None]], axis=-1)
        p = np.pad(z, ((0, 0), (1, 1), (1, 1), (0, 0)), mode="edge")
        n, h, w = z.shape[:3]
        out = np.broadcast_to(self.b_enc, (n, h, w, self.spec.token_dim)).copy()
        for ky in range(3):
            for kx in range(3):
                out += p[:, ky : ky + h, kx : kx + w, :] @ self.w_enc[ky, kx]
        out += prompt_embedding(self.spec, prompt) @ self.w_cond
        out += np.sin(self.time_omega * t + self.time_phase) @ self.w_time
        return np.tanh(out)

    def _attend(self, layer_idx, q, k, v, q_ref, k_ref, fresco: FrescoParams | None):
        """Attention dispatch for one site, honoring feature flags.

        With no guidance this is per-frame softmax(QK^T/sqrt(d))V; each
        enabled stage swaps in its guided counterpart. In editing mode the
        plain path uses the reference (injected) queries and keys, which
        is what plug-and-play replacement means for self-attention.
        """
        d = q.shape[-1]
        editing = fresco.attn.editing_mode if fresco is not None else q_ref is not None
        use_spatial = use_cross = use_temporal = False
        cfg = AttnConfig()
        if fresco is not None and self.spec.attention_modes[layer_idx] == "fresco":
            cfg = fresco.attn
            use_spatial = fresco.enable_spatial_attn and q_ref is not None
            use_cross = fresco.enable_cross_frame
            use_temporal = fresco.enable_temporal_attn

        q_plain = q_ref if (editing and q_ref is not None) else q
        k_plain = k_ref if (editing and k_ref is not None) else k

        if use_spatial:
            q1 = spatial_guided_attention(QkvSet(q, k, v, q_ref=q_ref, k_ref=k_ref), cfg)
        else:
            q1 = q_plain
        if use_cross:
            v1 = efficient_cross_frame_attention(q1, QkvSet(q, k, v, q_ref=q_ref, k_ref=k_ref), fresco.index.unique_tokens, cfg)
        else:
            v1 = np.empty_like(v)
            for i in range(v.shape[0]):
                v1[i] = softmax(q1[i] @ k_plain[i].T / np.sqrt(d)) @ v[i]
        if use_temporal:
            return temporal_guided_attention(QkvSet(q, k, v), v1, fresco.index.flow_chains, cfg)
        return v1

    def apply(
        self,
        x_t: np.ndarray,
        t: int,
        prompt: str | None,
        structure: np.ndarray,
        fresco: FrescoParams | None = None,
        injection: StepRecord | None = None,
    ) -> tuple[np.ndarray, DenoiserCapture]:
        """One noise-prediction pass over a batch of frame latents.

        x_t is (N, h, w, latent_dim) and structure (N, h, w) on the same
        grid. Returns the predicted noise and the per-layer captures
        (inputs as seen, Q/K before any replacement).
        """
        x = np.asarray(x_t, dtype=np.float64)
        require(x.ndim == 4 and x.shape[-1] == self.spec.latent_dim, f"latents must be (N, h, w, {self.spec.latent_dim}), got {x.shape}")
        structure = np.asarray(structure, dtype=np.float64)
        require(structure.shape == x.shape[:3], f"structure shape {structure.shape} does not match latents {x.shape[:3]}")
        n, h, w, _ = x.shape
        d = self.spec.token_dim
        cap = DenoiserCapture()

        f = self._encode_stage(x, t, prompt, structure)
        for l, layer in enumerate(self.layers):
            cap.layer_inputs.append(f.copy())
            skip = f
            if injection is not None:
                skip = injection.phi[l]
            if (
                fresco is not None
                and fresco.enable_opt
                and self.spec.feature_opt_layers[l]
                and fresco.wants_opt_at(t)
                and len(fresco.token_flows) > 0
            ):
                if injection is not None:
                    ref = injection.phi[l]
                else:
                    require(fresco.f_ref is not None, "feature optimization needs reference features")
                    ref = fresco.f_ref[l]
                f = optimize_features(f, ref, fresco.token_flows, fresco.token_masks, fresco.optim)

            flat = f.reshape(n, h * w, d)
            q = flat @ layer["w_q"]
            k = flat @ layer["w_k"]
            v = flat @ layer["w_v"]
            cap.q.append(q.copy())
            cap.k.append(k.copy())
            if injection is not None:
                q_ref, k_ref = injection.q[l], injection.k[l]
            elif fresco is not None and fresco.q_ref is not None:
                q_ref, k_ref = fresco.q_ref[l], fresco.k_ref[l]
            else:
                q_ref = k_ref = None
            attended = self._attend(l, q, k, v, q_ref, k_ref, fresco)
            f = np.tanh(skip + (attended @ layer["w_o"]).reshape(n, h, w, d))

        eps = (f.reshape(n, h * w, d) @ self.w_out).reshape(n, h, w, self.spec.latent_dim)
        return eps, cap


def extract_reference_features(
    denoiser: SyntheticDenoiser,
    x0: np.ndarray,
    prompt: str | None,
    structure: np.ndarray,
    sched: DiffusionSchedule,
    seed: int = 0,
) -> DenoiserCapture:
    """Single-step reference pass: noise to t=1, run plainly, keep captures."""
    eps = rng_for(seed, "reference-noise").standard_normal(np.shape(x0))
    x1 = ddpm_forward_sample(np.asarray(x0, dtype=np.float64), 1, eps, sched)
    _, cap = denoiser.apply(x1, 1, prompt, structure)
    return cap


def ddim_invert(
    denoiser: SyntheticDenoiser,
    x0: np.ndarray,
    prompt: str | None,
    structure: np.ndarray,
    sched: DiffusionSchedule,
) -> tuple[np.ndarray, InversionRecord]:
    """Walk the DDIM recursion up to x_T, recording captures per step."""
    x = np.asarray(x0, dtype=np.float64)
    steps = []
    for t in range(1, sched.T + 1):
        eps, cap = denoiser.apply(x, t, prompt, structure)
        steps.append(StepRecord(t=t, phi=cap.layer_inputs, q=cap.q, k=cap.k))
        x = ddim_inversion_step(x, eps, t, sched)
    return x, InversionRecord(steps=steps)
