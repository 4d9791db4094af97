"""End-to-end translation, editing, and long-video orchestration."""

from dataclasses import replace

import numpy as np
import pytest

from fresco.config import RunConfig
from fresco.denoiser import DenoiserSpec, SyntheticDenoiser
from fresco.errors import ContractError
from fresco.frames import FrameSequence
from fresco.pipeline import (
    build_fresco_params,
    clip_features,
    consecutive_correspondence,
    edit_video,
    evaluate_run,
    pnp_baseline,
    prepare_latents,
    run_long_video,
    sdedit_baseline,
    translate_video,
)
from fresco.scene import SceneSpec, Sprite, synthesize_scene


def small_scene(n_frames=3, size=16, dx=1.0, seed=3):
    spec = SceneSpec(
        width=size,
        height=size,
        n_frames=n_frames,
        sprites=(Sprite(seed=1, width=6, height=6, x=2, y=2, dx=dx, dy=0),),
    )
    return synthesize_scene(spec, seed=seed)


def quick_cfg(**kw):
    base = dict(steps=4, strength=0.75, opt_iterations=2, prompt="styled", s_min=1, s_max=3, batch_size=4)
    base.update(kw)
    return RunConfig(**base)


class _ZeroDenoiser(SyntheticDenoiser):
    def apply(self, x_t, t, prompt, structure, fresco=None, injection=None):
        eps, cap = super().apply(x_t, t, prompt, structure)
        return np.zeros_like(eps), cap


# ------------------------------------------------------------------- translate


def test_zero_strength_translate_is_the_codec_round_trip():
    seq, _, _ = small_scene()
    cfg = quick_cfg(strength=0.0)
    out = translate_video(seq, cfg)
    den = SyntheticDenoiser(DenoiserSpec(seed=cfg.denoiser_seed))
    want = np.stack([np.clip(den.latent_decode(den.latent_encode(f)), 0.0, 1.0) for f in seq.frames])
    assert np.max(np.abs(out.frames - want)) <= 1e-12


def test_translate_output_shape_range_and_rate():
    seq, _, _ = small_scene()
    seq = FrameSequence(seq.frames, frame_rate=12.0)
    out = translate_video(seq, quick_cfg())
    assert out.frames.shape == seq.frames.shape
    assert out.frames.min() >= 0.0 and out.frames.max() <= 1.0
    assert out.frame_rate == 12.0
    assert not np.array_equal(out.frames, seq.frames)


def test_translate_is_deterministic_and_seeded():
    seq, flows, masks = small_scene()
    cfg = quick_cfg()
    a = translate_video(seq, cfg, flows, masks)
    b = translate_video(seq, cfg, flows, masks)
    assert np.array_equal(a.frames, b.frames)
    c = translate_video(seq, replace(cfg, seed=1), flows, masks)
    assert not np.array_equal(a.frames, c.frames)


def test_prompt_steers_the_translation():
    seq, _, _ = small_scene()
    a = translate_video(seq, quick_cfg(prompt="a"))
    b = translate_video(seq, quick_cfg(prompt="b"))
    assert not np.array_equal(a.frames, b.frames)


def test_all_flags_off_equals_the_sdedit_baseline():
    seq, flows, masks = small_scene()
    cfg = quick_cfg()
    off = replace(
        cfg,
        enable_opt=False,
        enable_spatial_attn=False,
        enable_cross_frame=False,
        enable_temporal_attn=False,
    )
    manual = translate_video(seq, off, flows, masks)
    baseline = sdedit_baseline(seq, cfg)
    assert np.array_equal(manual.frames, baseline.frames)
    guided = translate_video(seq, cfg, flows, masks)
    assert not np.array_equal(guided.frames, baseline.frames)


def test_single_frame_translation_works():
    seq, _, _ = small_scene()
    one = FrameSequence(seq.frames[:1])
    out = translate_video(one, quick_cfg())
    assert out.frames.shape == one.frames.shape


# ------------------------------------------------------------------------ edit


def test_edit_runs_and_is_deterministic():
    seq, flows, masks = small_scene()
    cfg = quick_cfg(mode="edit")
    a = edit_video(seq, cfg, flows, masks)
    b = edit_video(seq, cfg, flows, masks)
    assert a.frames.shape == seq.frames.shape
    assert np.array_equal(a.frames, b.frames)


def test_all_flags_off_edit_equals_the_pnp_baseline():
    seq, _, _ = small_scene()
    cfg = quick_cfg(mode="edit")
    off = replace(
        cfg,
        enable_opt=False,
        enable_spatial_attn=False,
        enable_cross_frame=False,
        enable_temporal_attn=False,
    )
    assert np.array_equal(edit_video(seq, off).frames, pnp_baseline(seq, cfg).frames)


def test_zero_denoiser_edit_reconstructs_the_codec_image():
    # with eps == 0 everywhere, inversion and sampling cancel exactly
    seq, _, _ = small_scene()
    den = _ZeroDenoiser(DenoiserSpec(seed=0))
    cfg = quick_cfg(
        mode="edit",
        enable_opt=False,
        enable_spatial_attn=False,
        enable_cross_frame=False,
        enable_temporal_attn=False,
    )
    out = edit_video(seq, cfg, denoiser=den)
    want = np.stack([np.clip(den.latent_decode(den.latent_encode(f)), 0.0, 1.0) for f in seq.frames])
    assert np.max(np.abs(out.frames - want)) <= 1e-6


# ---------------------------------------------------------------------- params


def test_gt_and_estimated_params_agree_on_a_static_scene():
    seq, flows, masks = small_scene(dx=0.0)
    den = SyntheticDenoiser(DenoiserSpec(seed=0))
    cfg = quick_cfg()
    with_gt = build_fresco_params(seq.frames, den, "translate", cfg, flows, masks)
    estimated = build_fresco_params(seq.frames, den, "translate", cfg)
    for a, b in zip(with_gt.token_flows, estimated.token_flows):
        assert np.array_equal(a.vectors, b.vectors)
    for a, b in zip(with_gt.token_masks, estimated.token_masks):
        assert np.array_equal(a.valid, b.valid)
    assert with_gt.index.unique_tokens == estimated.index.unique_tokens
    assert with_gt.index.flow_chains == estimated.index.flow_chains
    for a, b in zip(with_gt.f_ref, estimated.f_ref):
        assert np.array_equal(a, b)


def test_params_modes_reference_handling():
    seq, flows, masks = small_scene()
    den = SyntheticDenoiser(DenoiserSpec(seed=0))
    cfg = quick_cfg()
    tr = build_fresco_params(seq.frames, den, "translate", cfg, flows, masks)
    assert tr.f_ref is not None and tr.q_ref is not None
    assert not tr.attn.editing_mode
    assert tr.optim.lam_spat == cfg.lam_spat
    ed = build_fresco_params(seq.frames, den, "edit", cfg, flows, masks)
    assert ed.f_ref is None and ed.q_ref is None
    assert ed.attn.editing_mode
    assert ed.optim.lam_spat == 0.0  # spatial loss needs a reference
    ed2 = build_fresco_params(seq.frames, den, "edit", replace(cfg, spat_in_edit=True), flows, masks)
    assert ed2.optim.lam_spat == cfg.lam_spat


def test_params_for_a_single_frame():
    seq, _, _ = small_scene()
    den = SyntheticDenoiser(DenoiserSpec(seed=0))
    params = build_fresco_params(seq.frames[:1], den, "translate", quick_cfg())
    assert params.token_flows == []
    assert params.index.n_frames == 1
    params.index.validate()


def test_correspondence_requires_paired_ground_truth():
    seq, flows, masks = small_scene()
    with pytest.raises(ContractError):
        consecutive_correspondence(seq.frames, quick_cfg(), gt_flows=flows, gt_masks=None)


def test_params_are_reproducible():
    seq, flows, masks = small_scene()
    den = SyntheticDenoiser(DenoiserSpec(seed=0))
    cfg = quick_cfg()
    a = build_fresco_params(seq.frames, den, "translate", cfg, flows, masks)
    b = build_fresco_params(seq.frames, den, "translate", cfg, flows, masks)
    for la, lb in zip(a.f_ref, b.f_ref):
        assert np.array_equal(la, lb)
    for la, lb in zip(a.q_ref, b.q_ref):
        assert np.array_equal(la, lb)


# ------------------------------------------------------------------ long video


def test_short_long_run_reduces_to_translate():
    seq, flows, masks = small_scene(n_frames=3)
    cfg = quick_cfg(mode="long", batch_size=8)
    debug = {}
    long_out = run_long_video(seq, cfg, flows, masks, debug=debug)
    plain = translate_video(seq, cfg, flows, masks)
    assert np.array_equal(long_out.frames, plain.frames)
    assert debug["plan"] == [0, 1, 2]
    assert debug["batches"] == [[0, 1, 2]]


def test_long_warp_mode_plan_and_output():
    seq, flows, masks = small_scene(n_frames=10, dx=1.0)
    cfg = quick_cfg(mode="long", batch_size=4, s_min=1, s_max=3)
    debug = {}
    out = run_long_video(seq, cfg, flows, masks, debug=debug)
    assert out.frames.shape == seq.frames.shape
    assert out.frames.min() >= 0.0 and out.frames.max() <= 1.0
    plan = debug["plan"]
    assert plan[0] == 0 and plan[-1] == 9
    assert all(b - a <= 3 for a, b in zip(plan, plan[1:]))
    # anchored batches over keyframe positions, n = 4 -> step 2
    assert debug["batches"][0][0] == 0
    for prev, nxt in zip(debug["batches"], debug["batches"][1:]):
        assert nxt[0] == 0 and nxt[1] == prev[-1]
    again = run_long_video(seq, cfg, flows, masks)
    assert np.array_equal(out.frames, again.frames)


def test_long_anchor_latents_agree_across_batches():
    seq, flows, masks = small_scene(n_frames=10)
    cfg = quick_cfg(mode="long", batch_size=4, s_min=1, s_max=2)
    debug = {}
    run_long_video(seq, cfg, flows, masks, debug=debug)
    assert len(debug["batches"]) >= 2
    recorded = debug["recorded"]
    head = debug["plan"][0]
    for later in recorded[1:]:
        assert head in later
        for t, value in later[head].items():
            assert np.array_equal(value, recorded[0][head][t])


def test_long_tokens_mode_runs_every_frame():
    seq, flows, masks = small_scene(n_frames=7)
    cfg = quick_cfg(mode="long", batch_size=5, propagation="tokens", cyclic_keys=2)
    debug = {}
    out = run_long_video(seq, cfg, flows, masks, debug=debug)
    assert debug["plan"] == list(range(7))  # no keyframe pruning in this mode
    assert out.frames.shape == seq.frames.shape
    again = run_long_video(seq, cfg, flows, masks)
    assert np.array_equal(out.frames, again.frames)


def test_long_three_level_mode():
    seq, flows, masks = small_scene(n_frames=10)
    cfg = quick_cfg(mode="long", batch_size=4, propagation="three-level", cyclic_keys=1, s_min=1, s_max=3)
    out = run_long_video(seq, cfg, flows, masks)
    assert out.frames.shape == seq.frames.shape
    assert out.frames.min() >= 0.0 and out.frames.max() <= 1.0


def test_long_edit_base_and_invalid_combination():
    seq, flows, masks = small_scene(n_frames=10)
    cfg = quick_cfg(mode="long", batch_size=4, long_base="edit", s_min=1, s_max=3)
    out = run_long_video(seq, cfg, flows, masks)
    assert out.frames.shape == seq.frames.shape
    with pytest.raises(ContractError, match="long_base"):
        run_long_video(seq, quick_cfg(mode="long", propagation="tokens", long_base="edit"))


# ------------------------------------------------------------------ evaluation


def test_evaluate_run_on_the_untouched_source():
    seq, flows, masks = small_scene(n_frames=4)
    rep = evaluate_run(seq, seq, quick_cfg(), flows, masks)
    assert rep.pixel_mse <= 1e-4  # source is warp-consistent by construction
    assert rep.spat_con == 0.0  # identical features, identical grams
    assert 0.0 <= rep.temp_con <= 1.0 + 1e-12


def test_evaluate_run_shape_mismatch():
    seq, _, _ = small_scene()
    with pytest.raises(ContractError):
        evaluate_run(FrameSequence(seq.frames[:2]), seq, quick_cfg())


def test_clip_features_shape():
    seq, _, _ = small_scene()
    den = SyntheticDenoiser(DenoiserSpec(seed=0))
    feats = clip_features(seq, den)
    assert feats.shape == (3, 64, 16)


def test_prepare_latents_grids():
    seq, _, _ = small_scene()
    den = SyntheticDenoiser(DenoiserSpec(seed=0))
    x0, struct = prepare_latents(den, seq.frames)
    assert x0.shape == (3, 8, 8, 4)
    assert struct.shape == (3, 8, 8)
    assert struct.min() >= 0.0 and struct.max() <= 1.0
