"""Zero-shot video translation and editing with flow-guided consistency.

Desk-scale reimplementation of a correspondence-guided diffusion video
pipeline: optical flow and occlusion handling, feature optimization,
guided attention, DDPM/DDIM sampling and inversion over a seeded
synthetic denoiser, long-video scheduling, and consistency metrics.
"""

from .attention import (
    AttnConfig,
    QkvSet,
    efficient_cross_frame_attention,
    fresco_attention,
    full_cross_frame_oracle,
    self_attention_baseline,
    spatial_guided_attention,
    temporal_guided_attention,
)
from .config import RunConfig, config_from_sections, load_config
from .correspondence import (
    AttentionIndex,
    FlowField,
    OcclusionMask,
    build_attention_index,
    build_flow_chains,
    build_unique_index,
    downscale_to_tokens,
    estimate_flow,
    occlusion_mask,
    warp,
    warp_transpose,
)
from .denoiser import (
    DenoiserCapture,
    DenoiserSpec,
    InversionRecord,
    StepRecord,
    SyntheticDenoiser,
    ddim_invert,
    extract_reference_features,
)
from .diffusion import (
    DiffusionSchedule,
    ddim_inversion_step,
    ddim_step,
    ddpm_forward_sample,
    ddpm_step,
    make_schedule,
    predict_x0,
)
from .errors import ContractError, FrescoError, FrescoIOError
from .feature_opt import (
    OptimConfig,
    loss_gradients,
    optimize_features,
    spatial_loss,
    temporal_loss,
    total_loss,
)
from .frames import FrameSequence, StructureMap, extract_structure, load_frames, save_frames
from .ftns import read_ftns, write_ftns
from .metrics import MetricReport, build_report, pixel_mse, spat_con, temp_con, write_report
from .params import FrescoParams
from .pipeline import (
    build_fresco_params,
    clip_features,
    consecutive_correspondence,
    edit_video,
    evaluate_run,
    pnp_baseline,
    run_long_video,
    sdedit_baseline,
    translate_video,
)
from .scene import SceneSpec, Sprite, load_scene, scene_from_sections, synthesize_scene
from .scheduler import (
    BatchPlan,
    CyclicSchedule,
    KeyframePlan,
    batch_plan,
    cyclic_schedule,
    interpolate_nonkeyframes,
    propagate_tokens,
    select_keyframes,
)

__version__ = "0.1.0"

__all__ = [
    "AttnConfig",
    "AttentionIndex",
    "BatchPlan",
    "ContractError",
    "CyclicSchedule",
    "DenoiserCapture",
    "DenoiserSpec",
    "DiffusionSchedule",
    "FlowField",
    "FrameSequence",
    "FrescoError",
    "FrescoIOError",
    "FrescoParams",
    "InversionRecord",
    "KeyframePlan",
    "MetricReport",
    "OcclusionMask",
    "OptimConfig",
    "QkvSet",
    "RunConfig",
    "SceneSpec",
    "Sprite",
    "StepRecord",
    "StructureMap",
    "SyntheticDenoiser",
    "batch_plan",
    "build_attention_index",
    "build_flow_chains",
    "build_fresco_params",
    "build_report",
    "build_unique_index",
    "clip_features",
    "config_from_sections",
    "consecutive_correspondence",
    "cyclic_schedule",
    "ddim_inversion_step",
    "ddim_invert",
    "ddim_step",
    "ddpm_forward_sample",
    "ddpm_step",
    "downscale_to_tokens",
    "edit_video",
    "efficient_cross_frame_attention",
    "estimate_flow",
    "evaluate_run",
    "extract_reference_features",
    "extract_structure",
    "fresco_attention",
    "full_cross_frame_oracle",
    "interpolate_nonkeyframes",
    "load_config",
    "load_frames",
    "load_scene",
    "loss_gradients",
    "make_schedule",
    "occlusion_mask",
    "optimize_features",
    "pixel_mse",
    "pnp_baseline",
    "predict_x0",
    "propagate_tokens",
    "read_ftns",
    "run_long_video",
    "save_frames",
    "scene_from_sections",
    "sdedit_baseline",
    "select_keyframes",
    "self_attention_baseline",
    "spat_con",
    "spatial_guided_attention",
    "spatial_loss",
    "synthesize_scene",
    "temp_con",
    "temporal_guided_attention",
    "temporal_loss",
    "total_loss",
    "translate_video",
    "warp",
    "warp_transpose",
    "write_ftns",
    "write_report",
]
