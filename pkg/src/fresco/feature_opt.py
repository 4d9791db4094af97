"""Feature optimization for temporal and spatial consistency.

A feature stack is an (N, h, w, d) float array: per-frame token grids of
d-channel vectors. The temporal term penalizes masked differences between
each frame and its flow-warped predecessor; the spatial term penalizes
drift of the per-frame gram matrix (cosine self-similarity pattern) away
from the reference features. Both have analytic gradients so the stack
can be polished with a few Adam steps inside the denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondence import FlowField, OcclusionMask, warp, warp_transpose
from .errors import require


@dataclass(frozen=True)
class OptimConfig:
    lam_spat: float = 50.0
    iterations: int = 20
    lr: float = 0.4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        require(self.iterations >= 0, "iteration count must be >= 0")
        require(self.lr > 0, "learning rate must be positive")
        require(self.lam_spat >= 0, "spatial weight must be >= 0")


def _check_stack(f: np.ndarray) -> np.ndarray:
    arr = np.asarray(f, dtype=np.float64)
    require(arr.ndim == 4, f"feature stack must be (N, h, w, d), got shape {arr.shape}")
    require(bool(np.isfinite(arr).all()), "feature stack must be finite")
    return arr


def _check_pairs(f, flows, masks):
    n, h, w, _ = f.shape
    require(len(flows) == n - 1 and len(masks) == n - 1, f"need {n - 1} consecutive-pair flows and masks")
    for fl, mk in zip(flows, masks):
        require(fl.grid_shape == (h, w), f"flow grid {fl.grid_shape} does not match tokens {(h, w)}")
        require(mk.grid_shape == (h, w), f"mask grid {mk.grid_shape} does not match tokens {(h, w)}")


def temporal_loss(f: np.ndarray, flows: list[FlowField], masks: list[OcclusionMask]) -> float:
    """Sum over consecutive pairs of the masked L1 warp residual."""
    f = _check_stack(f)
    _check_pairs(f, flows, masks)
    total = 0.0
    for i in range(f.shape[0] - 1):
        residual = f[i + 1] - warp(f[i], flows[i])
        total += float(np.abs(residual * masks[i].valid[..., None]).sum())
    return total


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return x / safe[:, None], safe, zero


def spatial_loss(
    f: np.ndarray,
    f_ref: np.ndarray,
    lam_spat: float = 50.0,
    diagnostics: dict | None = None,
) -> float:
    """Weighted squared Frobenius gap between gram matrices.

    Token rows are L2-normalized first, so the gram entries are cosines
    and any per-token positive rescaling of f is invisible. Zero-norm
    tokens normalize to zero rows and are tallied in diagnostics under
    "zero_norm_tokens".
    """
    f = _check_stack(f)
    f_ref = _check_stack(f_ref)
    require(f.shape == f_ref.shape, f"feature/reference shapes differ: {f.shape} vs {f_ref.shape}")
    n, h, w, d = f.shape
    zero_count = 0
    total = 0.0
    for i in range(n):
        u, _, z1 = _normalize_rows(f[i].reshape(h * w, d))
        ur, _, z2 = _normalize_rows(f_ref[i].reshape(h * w, d))
        zero_count += int(z1.sum()) + int(z2.sum())
        diff = u @ u.T - ur @ ur.T
        total += float((diff * diff).sum())
    if diagnostics is not None:
        diagnostics["zero_norm_tokens"] = diagnostics.get("zero_norm_tokens", 0) + zero_count
    return lam_spat * total


def total_loss(f, f_ref, flows, masks, lam_spat: float = 50.0) -> float:
    return temporal_loss(f, flows, masks) + spatial_loss(f, f_ref, lam_spat)


def loss_gradients(
    f: np.ndarray,
    f_ref: np.ndarray,
    flows: list[FlowField],
    masks: list[OcclusionMask],
    lam_spat: float = 50.0,
) -> np.ndarray:
    """Analytic gradient of temporal plus spatial loss w.r.t. the stack.

    The L1 term uses the sign subgradient with sign(0) = 0; the warp is
    handled by scattering through its transpose. The gram term uses
    d||UU^T - G_r||^2 / dU = 4 (UU^T - G_r) U, pulled back through the row
    normalization; zero-norm rows get a zero gradient.
    """
    f = _check_stack(f)
    f_ref = _check_stack(f_ref)
    require(f.shape == f_ref.shape, f"feature/reference shapes differ: {f.shape} vs {f_ref.shape}")
    _check_pairs(f, flows, masks)
    n, h, w, d = f.shape
    grad = np.zeros_like(f)

    for i in range(n - 1):
        m = masks[i].valid[..., None]
        s = np.sign(f[i + 1] - warp(f[i], flows[i])) * m
        grad[i + 1] += s
        grad[i] -= warp_transpose(s, flows[i])

    if lam_spat > 0:
        for i in range(n):
            x = f[i].reshape(h * w, d)
            u, norms, zero = _normalize_rows(x)
            ur, _, _ = _normalize_rows(f_ref[i].reshape(h * w, d))
            diff = u @ u.T - ur @ ur.T
            gu = 4.0 * lam_spat * (diff @ u)
            proj = gu - np.sum(gu * u, axis=1, keepdims=True) * u
            gx = proj / norms[:, None]
            gx[zero] = 0.0
            grad[i] += gx.reshape(h, w, d)
    return grad


def optimize_features(
    f: np.ndarray,
    f_ref: np.ndarray,
    flows: list[FlowField],
    masks: list[OcclusionMask],
    cfg: OptimConfig = OptimConfig(),
) -> np.ndarray:
    """Run a fixed number of Adam steps on the stack; returns the last iterate."""
    f = _check_stack(f).copy()
    m = np.zeros_like(f)
    v = np.zeros_like(f)
    for step in range(1, cfg.iterations + 1):
        g = loss_gradients(f, f_ref, flows, masks, cfg.lam_spat)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**step)
        v_hat = v / (1.0 - cfg.beta2**step)
        f -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return f
