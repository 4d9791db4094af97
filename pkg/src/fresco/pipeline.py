"""End-to-end video runs: translation, editing, and long-video batching.

The three entry points share one latent-space engine. translate_video
noises the encoded input partway (by `strength`) and denoises with DDPM
under correspondence guidance; edit_video DDIM-inverts, then samples back
with the recorded features injected; run_long_video schedules keyframes
and batches, carries anchor latents across batch boundaries, and fills
the remaining frames by token propagation, flow-warp interpolation, or
both.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import AttnConfig
from .config import RunConfig
from .correspondence import (
    AttentionIndex,
    FlowField,
    OcclusionMask,
    build_attention_index,
    downscale_to_tokens,
    estimate_flow,
    occlusion_mask,
)
from .denoiser import (
    DenoiserSpec,
    SyntheticDenoiser,
    ddim_invert,
    extract_reference_features,
)
from .diffusion import ddim_step, ddpm_forward_sample, ddpm_step, make_schedule
from .errors import require
from .feature_opt import OptimConfig
from .frames import FrameSequence, extract_structure
from .metrics import MetricReport, build_report
from .params import FrescoParams
from .scheduler import (
    batch_plan,
    compose_forward,
    cyclic_schedule,
    interpolate_nonkeyframes,
    propagate_tokens,
    select_keyframes,
)
from .seeding import rng_for

TOKEN_FACTOR = 2  # codec halves the resolution; tokens live on the latent grid


def _setup(cfg: RunConfig, denoiser: SyntheticDenoiser | None = None):
    if denoiser is None:
        denoiser = SyntheticDenoiser(DenoiserSpec(seed=cfg.denoiser_seed))
    sched = make_schedule(cfg.steps, cfg.beta_first, cfg.beta_last)
    return denoiser, sched


def _as_array(frames) -> np.ndarray:
    if isinstance(frames, FrameSequence):
        return frames.frames
    return np.asarray(frames, dtype=np.float64)


def prepare_latents(denoiser: SyntheticDenoiser, frames_arr: np.ndarray):
    """Encode frames and pool their structure maps onto the latent grid."""
    x0 = np.stack([denoiser.latent_encode(f) for f in frames_arr])
    n, hh, ww = frames_arr.shape[:3]
    struct = np.stack([extract_structure(f) for f in frames_arr])
    pooled = struct.reshape(n, hh // TOKEN_FACTOR, TOKEN_FACTOR, ww // TOKEN_FACTOR, TOKEN_FACTOR).mean(axis=(2, 4))
    return x0, pooled


def consecutive_correspondence(
    frames_arr: np.ndarray,
    cfg: RunConfig,
    gt_flows: list[FlowField] | None = None,
    gt_masks: list[OcclusionMask] | None = None,
    need_bwd: bool = True,
):
    """Flows and masks between every consecutive frame pair, both ways.

    Ground truth (when supplied) covers only the forward direction; the
    backward fields are estimated. Without ground truth the backward pass
    is mandatory because the occlusion check consumes both directions;
    with it, need_bwd=False skips the backward estimate and returns empty
    backward lists.
    """
    m = len(frames_arr)
    require((gt_flows is None) == (gt_masks is None), "supply ground-truth flows and masks together")
    if gt_flows is not None:
        require(len(gt_flows) == m - 1 and len(gt_masks) == m - 1, "need ground truth per consecutive pair")
    estimate_bwd = need_bwd or gt_flows is None
    flows_fwd, flows_bwd = [], []
    for i in range(m - 1):
        if gt_flows is not None:
            flows_fwd.append(gt_flows[i])
        else:
            flows_fwd.append(estimate_flow(frames_arr[i], frames_arr[i + 1], cfg.block_size, cfg.radius, pair=(i, i + 1)))
        if estimate_bwd:
            flows_bwd.append(estimate_flow(frames_arr[i + 1], frames_arr[i], cfg.block_size, cfg.radius, pair=(i + 1, i)))
    if gt_masks is not None:
        masks_fwd = list(gt_masks)
    else:
        masks_fwd = [occlusion_mask(f, b) for f, b in zip(flows_fwd, flows_bwd)]
    masks_bwd = [occlusion_mask(b, f) for b, f in zip(flows_bwd, flows_fwd)]
    return flows_fwd, masks_fwd, flows_bwd, masks_bwd


def _token_pairs(flows: list[FlowField], masks: list[OcclusionMask]):
    token_flows, token_masks = [], []
    for fl, mk in zip(flows, masks):
        tf, tm = downscale_to_tokens(fl, mk, TOKEN_FACTOR)
        token_flows.append(tf)
        token_masks.append(tm)
    return token_flows, token_masks


def _degenerate_index(grid_shape: tuple[int, int]) -> AttentionIndex:
    h, w = grid_shape
    return AttentionIndex(
        grid_shape=grid_shape,
        n_frames=1,
        unique_tokens=[(0, q) for q in range(h * w)],
        flow_chains=[[(0, q)] for q in range(h * w)],
    )


def build_fresco_params(
    frames,
    denoiser: SyntheticDenoiser,
    mode: str = "translate",
    cfg: RunConfig | None = None,
    gt_flows: list[FlowField] | None = None,
    gt_masks: list[OcclusionMask] | None = None,
    sched=None,
) -> FrescoParams:
    """Assemble the full guidance bundle for one batch of frames.

    Correspondence comes from ground truth when supplied and from block
    matching otherwise. Translation mode also runs the single-step
    reference pass; editing mode leaves the reference slots to the
    per-step inversion records.
    """
    cfg = cfg or RunConfig()
    require(mode in ("translate", "edit"), f"mode must be translate or edit, got {mode!r}")
    arr = _as_array(frames)
    m = len(arr)
    if sched is None:
        sched = make_schedule(cfg.steps, cfg.beta_first, cfg.beta_last)

    if m >= 2:
        flows_fwd, masks_fwd, _, _ = consecutive_correspondence(arr, cfg, gt_flows, gt_masks, need_bwd=False)
    else:
        flows_fwd, masks_fwd = [], []

    if flows_fwd:
        token_flows, token_masks = _token_pairs(flows_fwd, masks_fwd)
        index = build_attention_index(token_flows, token_masks)
    else:
        token_flows, token_masks = [], []
        hh, ww = arr.shape[1] // TOKEN_FACTOR, arr.shape[2] // TOKEN_FACTOR
        index = _degenerate_index((hh, ww))

    if mode == "translate":
        x0, struct = prepare_latents(denoiser, arr)
        cap = extract_reference_features(denoiser, x0, cfg.prompt, struct, sched, seed=cfg.seed)
        f_ref, q_ref, k_ref = cap.layer_inputs, cap.q, cap.k
        lam_spat = cfg.lam_spat
    else:
        f_ref = q_ref = k_ref = None
        lam_spat = cfg.lam_spat if cfg.spat_in_edit else 0.0

    return FrescoParams(
        token_flows=token_flows,
        token_masks=token_masks,
        index=index,
        f_ref=f_ref,
        q_ref=q_ref,
        k_ref=k_ref,
        attn=AttnConfig(lam_s=cfg.lam_s, lam_t=cfg.lam_t, editing_mode=(mode == "edit")),
        optim=OptimConfig(lam_spat=lam_spat, iterations=cfg.opt_iterations, lr=cfg.opt_lr),
        enable_opt=cfg.enable_opt,
        enable_spatial_attn=cfg.enable_spatial_attn,
        enable_cross_frame=cfg.enable_cross_frame,
        enable_temporal_attn=cfg.enable_temporal_attn,
    )


@dataclass
class _CyclicContext:
    """Per-timestep keyframe subsets plus everything propagation needs."""

    sets: list[list[int]]
    params_for: dict[tuple, FrescoParams]
    src_tokens: np.ndarray  # (B, hw, d) clean source features for NN matching


def _limit_opt_steps(params: FrescoParams | None, cfg: RunConfig, t_start: int):
    if params is not None and cfg.opt_steps_limit > 0:
        params.opt_timesteps = tuple(range(t_start, max(t_start - cfg.opt_steps_limit, 0), -1))


def _step_noise(cfg: RunConfig, t: int, global_ids, shape_one):
    return np.stack([rng_for(cfg.seed, "ddpm-noise", t, g).standard_normal(shape_one) for g in global_ids])


def _predict(denoiser, x, t, cfg, struct, params, cyclic: _CyclicContext | None, step_idx: int):
    if cyclic is None:
        eps, _ = denoiser.apply(x, t, cfg.prompt, struct, fresco=params)
        return eps
    subset = cyclic.sets[step_idx % len(cyclic.sets)]
    sub_params = cyclic.params_for[tuple(subset)]
    eps_s, _ = denoiser.apply(x[subset], t, cfg.prompt, struct[subset], fresco=sub_params)
    n, hh, ww, d = x.shape
    flat = propagate_tokens(cyclic.src_tokens, eps_s.reshape(len(subset), hh * ww, d), subset)
    return flat.reshape(n, hh, ww, d)


def _translate_latents(
    x0: np.ndarray,
    struct: np.ndarray,
    denoiser: SyntheticDenoiser,
    sched,
    cfg: RunConfig,
    params: FrescoParams | None,
    global_ids: list[int],
    inject: dict[int, dict[int, np.ndarray]] | None = None,
    record_rows: tuple[int, ...] = (),
    cyclic: _CyclicContext | None = None,
):
    """SDEdit-style partial noising then guided DDPM back to x_0."""
    t_start = int(round(cfg.strength * sched.T))
    _limit_opt_steps(params, cfg, t_start)
    if t_start == 0:
        x = x0.copy()
    else:
        eps0 = np.stack([rng_for(cfg.seed, "sdedit-noise", g).standard_normal(x0.shape[1:]) for g in global_ids])
        x = ddpm_forward_sample(x0, t_start, eps0, sched)
    recorded: dict[int, dict[int, np.ndarray]] = {r: {} for r in record_rows}

    def place(t):
        if inject:
            for row, traj in inject.items():
                if t in traj:
                    x[row] = traj[t]
        for r in record_rows:
            recorded[r][t] = x[r].copy()

    place(t_start)
    for step_idx, t in enumerate(range(t_start, 0, -1)):
        eps_pred = _predict(denoiser, x, t, cfg, struct, params, cyclic, step_idx)
        eps_new = _step_noise(cfg, t, global_ids, x.shape[1:])
        x = ddpm_step(x, eps_pred, t, eps_new, sched)
        place(t - 1)
    return x, recorded


def _edit_latents(
    x0: np.ndarray,
    struct: np.ndarray,
    denoiser: SyntheticDenoiser,
    sched,
    cfg: RunConfig,
    params: FrescoParams | None,
    inject: dict[int, dict[int, np.ndarray]] | None = None,
    record_rows: tuple[int, ...] = (),
):
    """DDIM inversion with recording, then injected deterministic sampling."""
    _limit_opt_steps(params, cfg, sched.T)
    x, record = ddim_invert(denoiser, x0, cfg.prompt, struct, sched)
    recorded: dict[int, dict[int, np.ndarray]] = {r: {} for r in record_rows}

    def place(t):
        if inject:
            for row, traj in inject.items():
                if t in traj:
                    x[row] = traj[t]
        for r in record_rows:
            recorded[r][t] = x[r].copy()

    place(sched.T)
    for t in range(sched.T, 0, -1):
        eps_pred, _ = denoiser.apply(x, t, cfg.prompt, struct, fresco=params, injection=record.at(t))
        x = ddim_step(x, eps_pred, t, sched)
        place(t - 1)
    return x, recorded


def _decode_all(denoiser: SyntheticDenoiser, latents: np.ndarray) -> np.ndarray:
    return np.clip(np.stack([denoiser.latent_decode(z) for z in latents]), 0.0, 1.0)


def translate_video(
    frames,
    cfg: RunConfig | None = None,
    gt_flows=None,
    gt_masks=None,
    denoiser: SyntheticDenoiser | None = None,
) -> FrameSequence:
    """Zero-shot translation of a clip under the configured prompt."""
    cfg = cfg or RunConfig()
    arr = _as_array(frames)
    denoiser, sched = _setup(cfg, denoiser)
    x0, struct = prepare_latents(denoiser, arr)
    guided = cfg.enable_opt or cfg.enable_spatial_attn or cfg.enable_cross_frame or cfg.enable_temporal_attn
    params = None
    if guided:
        params = build_fresco_params(arr, denoiser, "translate", cfg, gt_flows, gt_masks, sched)
    latents, _ = _translate_latents(x0, struct, denoiser, sched, cfg, params, list(range(len(arr))))
    rate = frames.frame_rate if isinstance(frames, FrameSequence) else cfg.frame_rate
    return FrameSequence(_decode_all(denoiser, latents), frame_rate=rate)


def sdedit_baseline(frames, cfg: RunConfig | None = None, denoiser=None) -> FrameSequence:
    """Per-frame SDEdit with every correspondence adaptation disabled."""
    cfg = replace(
        cfg or RunConfig(),
        enable_opt=False,
        enable_spatial_attn=False,
        enable_cross_frame=False,
        enable_temporal_attn=False,
    )
    return translate_video(frames, cfg, denoiser=denoiser)


def edit_video(
    frames,
    cfg: RunConfig | None = None,
    gt_flows=None,
    gt_masks=None,
    denoiser: SyntheticDenoiser | None = None,
) -> FrameSequence:
    """Invert, then resample with feature injection and guided attention."""
    cfg = cfg or RunConfig()
    arr = _as_array(frames)
    denoiser, sched = _setup(cfg, denoiser)
    x0, struct = prepare_latents(denoiser, arr)
    guided = cfg.enable_opt or cfg.enable_spatial_attn or cfg.enable_cross_frame or cfg.enable_temporal_attn
    params = None
    if guided:
        params = build_fresco_params(arr, denoiser, "edit", cfg, gt_flows, gt_masks, sched)
    latents, _ = _edit_latents(x0, struct, denoiser, sched, cfg, params)
    rate = frames.frame_rate if isinstance(frames, FrameSequence) else cfg.frame_rate
    return FrameSequence(_decode_all(denoiser, latents), frame_rate=rate)


def pnp_baseline(frames, cfg: RunConfig | None = None, denoiser=None) -> FrameSequence:
    """Injection-only editing: inversion records, no correspondence guidance."""
    cfg = replace(
        cfg or RunConfig(),
        enable_opt=False,
        enable_spatial_attn=False,
        enable_cross_frame=False,
        enable_temporal_attn=False,
    )
    return edit_video(frames, cfg, denoiser=denoiser)


def _composed_pair(cache, flows_fwd, masks_fwd, a: int, b: int):
    """Pixel flow/mask for the (possibly non-consecutive) pair a -> b."""
    key = (a, b)
    if key not in cache:
        if b == a + 1:
            cache[key] = (flows_fwd[a], masks_fwd[a])
        else:
            vec, ok = compose_forward(flows_fwd, masks_fwd, a, b)
            cache[key] = (FlowField(a, b, vec), OcclusionMask(a, b, ok.astype(np.int64)))
    return cache[key]


def _batch_pairs(cache, flows_fwd, masks_fwd, member_ids: list[int]):
    pair_flows, pair_masks = [], []
    for a, b in zip(member_ids, member_ids[1:]):
        fl, mk = _composed_pair(cache, flows_fwd, masks_fwd, a, b)
        pair_flows.append(fl)
        pair_masks.append(mk)
    return pair_flows, pair_masks


def _subset_params_builder(cfg, mode, ref_cap, cache, flows_fwd, masks_fwd, member_ids):
    """Returns a function building FrescoParams for a subset of batch rows."""
    built: dict[tuple, FrescoParams] = {}
    editing = mode == "edit"
    lam_spat = cfg.lam_spat if (not editing or cfg.spat_in_edit) else 0.0

    def for_rows(rows: tuple[int, ...]) -> FrescoParams:
        if rows in built:
            return built[rows]
        ids = [member_ids[r] for r in rows]
        pair_flows, pair_masks = _batch_pairs(cache, flows_fwd, masks_fwd, ids)
        token_flows, token_masks = _token_pairs(pair_flows, pair_masks)
        index = build_attention_index(token_flows, token_masks)
        params = FrescoParams(
            token_flows=token_flows,
            token_masks=token_masks,
            index=index,
            f_ref=None if editing else [layer[ids] for layer in ref_cap.layer_inputs],
            q_ref=None if editing else [layer[ids] for layer in ref_cap.q],
            k_ref=None if editing else [layer[ids] for layer in ref_cap.k],
            attn=AttnConfig(lam_s=cfg.lam_s, lam_t=cfg.lam_t, editing_mode=editing),
            optim=OptimConfig(lam_spat=lam_spat, iterations=cfg.opt_iterations, lr=cfg.opt_lr),
            enable_opt=cfg.enable_opt,
            enable_spatial_attn=cfg.enable_spatial_attn,
            enable_cross_frame=cfg.enable_cross_frame,
            enable_temporal_attn=cfg.enable_temporal_attn,
        )
        built[rows] = params
        return params

    return for_rows


def run_long_video(
    frames,
    cfg: RunConfig | None = None,
    gt_flows=None,
    gt_masks=None,
    denoiser: SyntheticDenoiser | None = None,
    debug: dict | None = None,
) -> FrameSequence:
    """Keyframe scheduling, anchored batches, and non-keyframe fill-in.

    propagation="warp" manipulates only selected keyframes and
    interpolates the rest from composed flows; "tokens" runs anchored
    batches over every frame but denoises just a rotating keyframe subset
    per timestep, propagating predicted noise to the others;
    "three-level" applies the rotating-subset scheme to the keyframe
    batches and then interpolates. The per-batch manipulation follows
    cfg.long_base; the rotating-subset modes need the translation base.
    """
    cfg = cfg or RunConfig()
    require(
        cfg.long_base == "translate" or cfg.propagation == "warp",
        f"propagation {cfg.propagation!r} needs long_base='translate'",
    )
    seq = frames if isinstance(frames, FrameSequence) else FrameSequence(frames, frame_rate=cfg.frame_rate)
    arr = seq.frames
    m = len(arr)
    denoiser, sched = _setup(cfg, denoiser)

    if m <= cfg.batch_size:
        if debug is not None:
            debug["plan"] = list(range(m))
            debug["batches"] = [list(range(m))]
        base = translate_video if cfg.long_base == "translate" else edit_video
        return base(seq, cfg, gt_flows, gt_masks, denoiser=denoiser)

    use_cyclic = cfg.propagation in ("tokens", "three-level")
    keyframes_only = cfg.propagation in ("warp", "three-level")
    flows_fwd, masks_fwd, flows_bwd, masks_bwd = consecutive_correspondence(
        arr, cfg, gt_flows, gt_masks, need_bwd=keyframes_only
    )
    if keyframes_only:
        plan = select_keyframes(seq, cfg.s_min, cfg.s_max)
        positions = plan.omega
    else:
        plan = None
        positions = list(range(m))
    bplan = batch_plan(len(positions), cfg.batch_size)

    x0_all, struct_all = prepare_latents(denoiser, arr)
    ref_cap = None
    if cfg.long_base == "translate":
        ref_cap = extract_reference_features(denoiser, x0_all, cfg.prompt, struct_all, sched, seed=cfg.seed)
    src_feats = None
    if use_cyclic:
        _, clean_cap = denoiser.apply(x0_all, 1, None, struct_all)
        src_feats = clean_cap.layer_inputs[0].reshape(m, -1, denoiser.spec.token_dim)
    pair_cache: dict = {}
    anchor_traj: dict[int, dict[int, np.ndarray]] = {}
    edited = np.zeros_like(arr)
    if debug is not None:
        debug["plan"] = list(positions)
        debug["batches"] = [list(b) for b in bplan.batches]
        debug["recorded"] = []
        debug["injected"] = []

    for batch, rec_positions in zip(bplan.batches, bplan.record_anchors):
        member_ids = [positions[p] for p in batch]
        params_builder = _subset_params_builder(
            cfg, cfg.long_base, ref_cap, pair_cache, flows_fwd, masks_fwd, member_ids
        )
        params = params_builder(tuple(range(len(batch))))
        inject = {}
        for row, gid in enumerate(member_ids):
            if gid in anchor_traj:
                inject[row] = anchor_traj[gid]
        record_rows = tuple(batch.index(p) for p in rec_positions)

        cyclic = None
        if use_cyclic and len(batch) >= 3:
            n_key = max(1, min(cfg.cyclic_keys, len(batch) - 2))
            t_start = max(int(round(cfg.strength * sched.T)), 1)
            sets = cyclic_schedule(len(batch), n_key, t_start, include_anchors=True).sets
            cyclic = _CyclicContext(
                sets=sets,
                params_for={tuple(s): params_builder(tuple(s)) for s in sets},
                src_tokens=src_feats[member_ids],
            )

        if cfg.long_base == "translate":
            latents, recorded = _translate_latents(
                x0_all[member_ids],
                struct_all[member_ids],
                denoiser,
                sched,
                cfg,
                params,
                member_ids,
                inject=inject or None,
                record_rows=record_rows,
                cyclic=cyclic,
            )
        else:
            latents, recorded = _edit_latents(
                x0_all[member_ids],
                struct_all[member_ids],
                denoiser,
                sched,
                cfg,
                params,
                inject=inject or None,
                record_rows=record_rows,
            )
        for row, traj in recorded.items():
            anchor_traj[member_ids[row]] = traj
        if debug is not None:
            debug["recorded"].append({member_ids[r]: {t: v.copy() for t, v in traj.items()} for r, traj in recorded.items()})
            debug["injected"].append({member_ids[r]: {t: v.copy() for t, v in traj.items()} for r, traj in inject.items()})
        decoded = _decode_all(denoiser, latents)
        for row, gid in enumerate(member_ids):
            edited[gid] = decoded[row]

    if keyframes_only:
        edited_keyframes = np.stack([edited[k] for k in plan.omega])
        return interpolate_nonkeyframes(seq, edited_keyframes, plan, flows_fwd, masks_fwd, flows_bwd, masks_bwd)
    return FrameSequence(edited, frame_rate=seq.frame_rate)


def clip_features(frames, denoiser: SyntheticDenoiser) -> np.ndarray:
    """Clean-pass encoder features per frame, as (N, hw, d) tokens."""
    arr = _as_array(frames)
    x0, struct = prepare_latents(denoiser, arr)
    _, cap = denoiser.apply(x0, 1, None, struct)
    feats = cap.layer_inputs[0]
    n, hh, ww, d = feats.shape
    return feats.reshape(n, hh * ww, d)


def evaluate_run(
    output,
    source,
    cfg: RunConfig | None = None,
    gt_flows=None,
    gt_masks=None,
    denoiser: SyntheticDenoiser | None = None,
) -> MetricReport:
    """Score an output clip against its source.

    Warped pixel error uses the source video's correspondence (ground
    truth when given, else block matching on the source frames); feature
    metrics use the clean-pass encoder features of both clips.
    """
    cfg = cfg or RunConfig()
    denoiser, _ = _setup(cfg, denoiser)
    src_arr = _as_array(source)
    out_seq = output if isinstance(output, FrameSequence) else FrameSequence(output, frame_rate=cfg.frame_rate)
    require(out_seq.frames.shape == src_arr.shape, f"output shape {out_seq.frames.shape} does not match source {src_arr.shape}")
    flows, masks, _, _ = consecutive_correspondence(src_arr, cfg, gt_flows, gt_masks, need_bwd=False)
    out_feats = clip_features(out_seq, denoiser)
    ref_feats = clip_features(src_arr, denoiser)
    return build_report(out_seq, flows, masks, out_feats, ref_feats)
