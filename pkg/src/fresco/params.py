"""The correspondence-and-reference bundle fed into guided denoising."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttnConfig
from .correspondence import AttentionIndex, FlowField, OcclusionMask
from .errors import require
from .feature_opt import OptimConfig


@dataclass
class FrescoParams:
    """Everything the denoiser needs to couple a batch of frames.

    Token-grid flows/masks per consecutive pair, the two attention
    indices, reference features per decoder layer (layer inputs plus Q/K
    projections from the reference pass), the loss/attention weights, and
    one independent enable flag per adaptation so ablations can switch
    each off alone. opt_timesteps of None means optimize at every step.
    """

    token_flows: list[FlowField]
    token_masks: list[OcclusionMask]
    index: AttentionIndex
    f_ref: list[np.ndarray] | None = None
    q_ref: list[np.ndarray] | None = None
    k_ref: list[np.ndarray] | None = None
    attn: AttnConfig = field(default_factory=AttnConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    enable_opt: bool = True
    enable_spatial_attn: bool = True
    enable_cross_frame: bool = True
    enable_temporal_attn: bool = True
    opt_timesteps: tuple[int, ...] | None = None

    def __post_init__(self):
        require(len(self.token_flows) == len(self.token_masks), "need one mask per flow")

    def wants_opt_at(self, t: int) -> bool:
        return self.opt_timesteps is None or t in self.opt_timesteps

    def any_guidance(self) -> bool:
        return (
            self.enable_opt
            or self.enable_spatial_attn
            or self.enable_cross_frame
            or self.enable_temporal_attn
        )
