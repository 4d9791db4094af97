"""Cross-frame attention variants steered by correspondence indices.

All operations take per-frame token matrices of shape (N, hw, d) and are
single-head. Three stages chain together: reference-similarity mixing of
the queries, one shared attention pass over the unique-token pool, and
per-chain attention along motion paths. Editing mode swaps in reference
queries/keys where noted so an inverted clip can be restyled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import require


@dataclass
class QkvSet:
    """Token projections for every frame, plus optional reference ones."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    q_ref: np.ndarray | None = None
    k_ref: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        require(self.q.ndim == 3, f"Q must be (N, hw, d), got {self.q.shape}")
        require(self.q.shape[-1] > 0, "token dimension must be positive")
        for name in ("k", "v", "q_ref", "k_ref"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.float64)
            require(arr.shape == self.q.shape, f"{name} shape {arr.shape} does not match q {self.q.shape}")
            setattr(self, name, arr)

    @property
    def n_frames(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[-1]

    def has_references(self) -> bool:
        return self.q_ref is not None and self.k_ref is not None


@dataclass(frozen=True)
class AttnConfig:
    lam_s: float = 5.0
    lam_t: float = 5.0
    editing_mode: bool = False

    def __post_init__(self):
        require(self.lam_s > 0 and self.lam_t > 0, "temperature scales must be positive")


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def spatial_guided_attention(qkv: QkvSet, cfg: AttnConfig = AttnConfig()) -> np.ndarray:
    """Mix each frame's queries by the reference self-similarity pattern.

    Q'_i = softmax(Q^r_i K^r_i^T / (lam_s sqrt(d))) Q_i, with Q^r_i taking
    the place of Q_i in editing mode.
    """
    require(qkv.has_references(), "spatial-guided attention needs reference Q and K")
    scale = cfg.lam_s * np.sqrt(qkv.dim)
    source = qkv.q_ref if cfg.editing_mode else qkv.q
    out = np.empty_like(qkv.q)
    for i in range(qkv.n_frames):
        weights = softmax(qkv.q_ref[i] @ qkv.k_ref[i].T / scale)
        out[i] = weights @ source[i]
    return out


def gather_tokens(stack: np.ndarray, index: list[tuple[int, int]]) -> np.ndarray:
    """Rows of an (N, hw, d) stack at (frame, token) pairs, in index order."""
    frames = np.array([f for f, _ in index], dtype=np.int64)
    tokens = np.array([q for _, q in index], dtype=np.int64)
    return stack[frames, tokens]


def efficient_cross_frame_attention(
    q_prime: np.ndarray,
    qkv: QkvSet,
    unique_tokens: list[tuple[int, int]],
    cfg: AttnConfig = AttnConfig(),
) -> np.ndarray:
    """Attend every frame's mixed queries to the shared unique-token pool.

    V'_i = softmax(Q'_i (K[p_u])^T / sqrt(d)) V[p_u]; editing mode gathers
    the pool keys from K^r instead. No temperature scale here.
    """
    q_prime = np.asarray(q_prime, dtype=np.float64)
    require(q_prime.shape == qkv.q.shape, f"Q' shape {q_prime.shape} does not match {qkv.q.shape}")
    require(len(unique_tokens) > 0, "unique-token index may not be empty")
    key_source = qkv.k_ref if cfg.editing_mode else qkv.k
    require(key_source is not None, "editing mode needs reference keys")
    keys = gather_tokens(key_source, unique_tokens)
    values = gather_tokens(qkv.v, unique_tokens)
    scale = np.sqrt(qkv.dim)
    out = np.empty_like(q_prime)
    for i in range(qkv.n_frames):
        out[i] = softmax(q_prime[i] @ keys.T / scale) @ values
    return out


def temporal_guided_attention(
    qkv: QkvSet,
    v_prime: np.ndarray,
    flow_chains: list[list[tuple[int, int]]],
    cfg: AttnConfig = AttnConfig(),
) -> np.ndarray:
    """Per-chain attention along motion paths, always with current Q and K.

    H[chain] = softmax(Q[chain] K[chain]^T / (lam_t sqrt(d))) V'[chain];
    since the chains partition all tokens this fills the whole output.
    """
    v_prime = np.asarray(v_prime, dtype=np.float64)
    require(v_prime.shape == qkv.q.shape, f"V' shape {v_prime.shape} does not match {qkv.q.shape}")
    scale = cfg.lam_t * np.sqrt(qkv.dim)
    out = np.zeros_like(v_prime)
    for chain in flow_chains:
        frames = np.array([f for f, _ in chain], dtype=np.int64)
        tokens = np.array([q for _, q in chain], dtype=np.int64)
        qc = qkv.q[frames, tokens]
        kc = qkv.k[frames, tokens]
        vc = v_prime[frames, tokens]
        out[frames, tokens] = softmax(qc @ kc.T / scale) @ vc
    return out


def full_cross_frame_oracle(qkv: QkvSet) -> np.ndarray:
    """Dense reference: every frame attends to all frames' keys/values."""
    n, hw, d = qkv.q.shape
    keys = qkv.k.reshape(n * hw, d)
    values = qkv.v.reshape(n * hw, d)
    out = np.empty_like(qkv.q)
    for i in range(n):
        out[i] = softmax(qkv.q[i] @ keys.T / np.sqrt(d)) @ values
    return out


def self_attention_baseline(qkv: QkvSet) -> np.ndarray:
    """Plain per-frame softmax(Q K^T / sqrt(d)) V."""
    out = np.empty_like(qkv.q)
    for i in range(qkv.n_frames):
        out[i] = softmax(qkv.q[i] @ qkv.k[i].T / np.sqrt(qkv.dim)) @ qkv.v[i]
    return out


def fresco_attention(
    qkv: QkvSet,
    unique_tokens: list[tuple[int, int]],
    flow_chains: list[list[tuple[int, int]]],
    cfg: AttnConfig = AttnConfig(),
) -> np.ndarray:
    """The full three-stage chain used inside the denoiser."""
    q_prime = spatial_guided_attention(qkv, cfg)
    v_prime = efficient_cross_frame_attention(q_prime, qkv, unique_tokens, cfg)
    return temporal_guided_attention(qkv, v_prime, flow_chains, cfg)
