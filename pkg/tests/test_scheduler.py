"""Keyframe selection, batching, cyclic sampling, and keyframe propagation."""

import numpy as np
import pytest

from fresco.correspondence import FlowField, OcclusionMask, estimate_flow, occlusion_mask, warp
from fresco.errors import ContractError
from fresco.frames import FrameSequence
from fresco.scene import SceneSpec, Sprite, synthesize_scene
from fresco.scheduler import (
    KeyframePlan,
    batch_plan,
    compose_backward,
    compose_forward,
    cyclic_schedule,
    interpolate_nonkeyframes,
    propagate_tokens,
    select_keyframes,
)


def video_with_diffs(diffs, h=16, w=16):
    """Frames whose consecutive L2 differences are exactly sqrt(#flips)."""
    frames = np.zeros((len(diffs) + 1, h, w, 3))
    cursor = 0
    for i, flips in enumerate(diffs, start=1):
        frames[i] = frames[i - 1]
        for _ in range(flips):
            y, x = divmod(cursor, w)
            cursor += 1
            frames[i, y, x, 0] = 1.0 - frames[i, y, x, 0]
    return FrameSequence(frames)


# ------------------------------------------------------------------- keyframes


def test_short_video_keeps_only_endpoints():
    seq = FrameSequence(np.random.default_rng(0).uniform(size=(5, 4, 4, 3)))
    plan = select_keyframes(seq, s_min=2, s_max=10)
    assert plan.omega == [0, 4]
    assert (plan.s_min, plan.s_max) == (2, 10)


def test_keyframes_follow_motion_peaks():
    # differences 0,5,1,9,1,2,3,0,0: the s_min window suppresses runners-up
    seq = video_with_diffs([0, 25, 1, 81, 1, 4, 9, 0, 0])
    assert select_keyframes(seq, s_min=2, s_max=4).omega == [0, 4, 7, 9]


def test_keyframe_ties_go_to_the_smallest_index():
    seq = video_with_diffs([4] * 8, h=8, w=8)  # every difference equals 2
    assert select_keyframes(seq, s_min=1, s_max=4).omega == [0, 1, 2, 3, 4, 8]


def test_constant_video_falls_back_to_midpoints():
    seq = FrameSequence(np.zeros((10, 4, 4, 3)))
    assert select_keyframes(seq, s_min=2, s_max=4).omega == [0, 4, 6, 9]


def test_keyframe_gaps_respect_s_max_under_fuzz():
    rng = np.random.default_rng(1)
    for trial in range(500):
        m = int(rng.integers(2, 32))
        frames = rng.uniform(size=(m, 4, 4, 3))
        s_min = int(rng.integers(1, 4))
        s_max = int(rng.integers(s_min, 8))
        plan = select_keyframes(FrameSequence(frames), s_min, s_max)
        omega = plan.omega
        assert omega[0] == 0 and omega[-1] == m - 1
        assert omega == sorted(set(omega))
        assert all(b - a <= s_max for a, b in zip(omega, omega[1:]))


def test_keyframe_argument_validation():
    seq = FrameSequence(np.zeros((4, 2, 2, 3)))
    with pytest.raises(ContractError):
        select_keyframes(seq, s_min=3, s_max=2)
    with pytest.raises(ContractError):
        select_keyframes(FrameSequence(np.zeros((1, 2, 2, 3)), frame_rate=8.0), 1, 2)


# --------------------------------------------------------------------- batches


def test_single_batch_when_everything_fits():
    plan = batch_plan(6, 8)
    assert plan.batches == [[0, 1, 2, 3, 4, 5]]
    assert plan.record_anchors == [[0, 5]]


def test_batches_share_the_global_head_and_boundaries():
    plan = batch_plan(20, 8)
    assert plan.batches == [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [0, 7, 8, 9, 10, 11, 12, 13],
        [0, 13, 14, 15, 16, 17, 18, 19],
    ]
    assert plan.record_anchors == [[0, 7], [0, 13], [0, 19]]


def test_truncated_tail_batch():
    plan = batch_plan(10, 8)
    assert plan.batches == [[0, 1, 2, 3, 4, 5, 6, 7], [0, 7, 8, 9]]
    assert plan.record_anchors == [[0, 7], [0, 9]]


def test_batch_plan_invariants_under_fuzz():
    for kc in range(1, 41):
        for n in (3, 4, 7, 8, 10):
            plan = batch_plan(kc, n)
            covered = set()
            for batch in plan.batches:
                assert len(batch) <= n
                assert batch[0] == 0
                covered.update(batch)
            assert covered == set(range(kc))
            for prev, nxt in zip(plan.batches, plan.batches[1:]):
                assert nxt[1] == prev[-1]  # boundary anchor carried over
            for batch, rec in zip(plan.batches, plan.record_anchors):
                assert rec == [batch[0], batch[-1]]


def test_batch_plan_rejects_tiny_batches():
    with pytest.raises(ContractError):
        batch_plan(5, 2)


# ---------------------------------------------------------------------- cyclic


def test_cyclic_toy_rotation():
    sched = cyclic_schedule(6, 2, 4)
    assert sched.sets == [[0, 3], [1, 4], [2, 5], [0, 3]]


def test_cyclic_sets_shift_by_one_each_step():
    sched = cyclic_schedule(7, 3, 10)
    for cur, nxt in zip(sched.sets, sched.sets[1:]):
        assert nxt == sorted((s + 1) % 7 for s in cur)


def test_cyclic_counts_are_balanced_over_a_full_cycle():
    sched = cyclic_schedule(6, 2, 6)
    counts = np.zeros(6, dtype=int)
    for s in sched.sets:
        counts[s] += 1
    assert np.all(counts == 2)  # n_key * T / batch selections each


def test_cyclic_with_anchors_pins_the_endpoints():
    sched = cyclic_schedule(6, 2, 4, include_anchors=True)
    assert sched.sets == [[0, 1, 3, 5], [0, 2, 4, 5], [0, 1, 3, 5], [0, 2, 4, 5]]
    for s in sched.sets:
        assert 0 in s and 5 in s


def test_cyclic_validation():
    with pytest.raises(ContractError):
        cyclic_schedule(6, 1, 4)  # keyless rotation is meaningless
    with pytest.raises(ContractError):
        cyclic_schedule(6, 5, 4, include_anchors=True)  # interior is only 4


# ----------------------------------------------------------------- propagation


def test_propagate_keyframes_pass_through():
    rng = np.random.default_rng(2)
    src = rng.standard_normal((3, 5, 4))
    edited = rng.standard_normal((3, 5, 6))  # channel count may differ
    out = propagate_tokens(src, edited, [0, 1, 2])
    assert np.array_equal(out, edited)


def test_propagate_equidistant_blend_with_identity_match():
    rng = np.random.default_rng(3)
    tokens = rng.standard_normal((6, 4))
    src = np.stack([tokens] * 3)  # identical frames: NN match is the identity
    edited = rng.standard_normal((2, 6, 4))
    out = propagate_tokens(src, edited, [0, 2])
    assert np.allclose(out[1], 0.5 * edited[0] + 0.5 * edited[1])
    assert np.array_equal(out[0], edited[0])
    assert np.array_equal(out[2], edited[1])


def test_propagate_matches_cosine_oracle():
    rng = np.random.default_rng(4)
    src = rng.standard_normal((4, 7, 5))
    edited = rng.standard_normal((2, 7, 3))
    keys = [0, 3]
    out = propagate_tokens(src, edited, keys)

    def unit(v):
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    for i in (1, 2):
        expect = np.zeros((7, 3))
        wts = []
        for slot, k in enumerate(keys):
            w = 1.0 / abs(i - k)
            nn = [int(np.argmax([unit(src[i, q]) @ unit(src[k, p]) for p in range(7)])) for q in range(7)]
            expect += w * edited[slot][nn]
            wts.append(w)
        expect /= sum(wts)
        assert np.max(np.abs(out[i] - expect)) <= 1e-12


def test_propagate_single_keyframe_copies_everywhere():
    rng = np.random.default_rng(5)
    tokens = rng.standard_normal((4, 3))
    src = np.stack([tokens] * 3)
    edited = rng.standard_normal((1, 4, 3))
    out = propagate_tokens(src, edited, [1])
    for i in range(3):
        assert np.allclose(out[i], edited[0])


def test_propagate_sorts_the_keyframe_set():
    rng = np.random.default_rng(6)
    src = rng.standard_normal((3, 4, 2))
    edited = rng.standard_normal((2, 4, 2))
    a = propagate_tokens(src, edited, [2, 0])
    b = propagate_tokens(src, edited, [0, 2])
    assert np.array_equal(a, b)


# ----------------------------------------------------------- flow composition


def _shift_world(n_frames, h=12, w=16):
    """Integer rightward motion: fwd flow -1, bwd flow +1 per pair.

    Masks are honest about the frame edge: the newly exposed left column
    has no forward pre-image, the right column no backward one.
    """
    fwd = [FlowField(i, i + 1, np.full((h, w, 2), 0.0) + [-1.0, 0.0]) for i in range(n_frames - 1)]
    bwd = [FlowField(i + 1, i, np.full((h, w, 2), 0.0) + [1.0, 0.0]) for i in range(n_frames - 1)]
    m_f = np.ones((h, w), dtype=np.int64)
    m_f[:, 0] = 0
    m_b = np.ones((h, w), dtype=np.int64)
    m_b[:, -1] = 0
    masks_f = [OcclusionMask(i, i + 1, m_f) for i in range(n_frames - 1)]
    masks_b = [OcclusionMask(i + 1, i, m_b) for i in range(n_frames - 1)]
    return fwd, masks_f, bwd, masks_b


def test_compose_forward_accumulates_translation():
    fwd, masks, _, _ = _shift_world(5)
    acc, ok = compose_forward(fwd, masks, 0, 4)
    assert np.allclose(acc[:, 4:, 0], -4.0)
    assert np.allclose(acc[:, 4:, 1], 0.0)
    assert np.all(ok[:, 4:])
    assert not ok[:, :4].any()  # walks off the left edge


def test_compose_backward_accumulates_translation():
    _, _, bwd, masks_b = _shift_world(5)
    acc, ok = compose_backward(bwd, masks_b, 4, 0)
    assert np.allclose(acc[:, :12, 0], 4.0)
    assert np.all(ok[:, :12])
    assert not ok[:, 12:].any()


def test_compose_adjacent_pair_is_the_raw_flow():
    fwd, masks, _, _ = _shift_world(3)
    acc, ok = compose_forward(fwd, masks, 1, 2)
    assert np.array_equal(acc, fwd[1].vectors)
    assert np.array_equal(ok, masks[1].valid.astype(bool))


def test_composed_warp_reproduces_scene_frames():
    spec = SceneSpec(width=32, height=24, n_frames=6, sprites=(Sprite(seed=3, width=8, height=6, x=2, y=8, dx=2, dy=0),))
    seq, flows, masks = synthesize_scene(spec, seed=4)
    for a, j in [(0, 2), (0, 4), (2, 5)]:
        acc, ok = compose_forward(flows, masks, a, j)
        warped = warp(seq.frames[a], FlowField(a, j, acc))
        assert ok.mean() > 0.9
        assert np.max(np.abs(warped - seq.frames[j])[ok]) <= 1e-9


# --------------------------------------------------------------- interpolation


def test_interpolate_static_video_averages_the_keyframes():
    h = w = 8
    frames = np.full((3, h, w, 3), 0.5)
    video = FrameSequence(frames)
    zero = lambda i, j: FlowField(i, j, np.zeros((h, w, 2)))
    ones = lambda i, j: OcclusionMask(i, j, np.ones((h, w), dtype=np.int64))
    plan = KeyframePlan(omega=[0, 2], s_min=1, s_max=2)
    edited = np.stack([np.full((h, w, 3), 0.2), np.full((h, w, 3), 0.8)])
    out = interpolate_nonkeyframes(
        video, edited, plan,
        [zero(0, 1), zero(1, 2)], [ones(0, 1), ones(1, 2)],
        [zero(1, 0), zero(2, 1)], [ones(1, 0), ones(2, 1)],
    )
    assert np.array_equal(out.frames[0], edited[0])
    assert np.array_equal(out.frames[2], edited[1])
    assert np.allclose(out.frames[1], 0.5)  # equal-weight blend of 0.2 and 0.8


def test_interpolate_identity_edit_reproduces_the_scene():
    spec = SceneSpec(width=32, height=24, n_frames=7, sprites=(Sprite(seed=3, width=8, height=6, x=2, y=8, dx=2, dy=0),))
    seq, flows_fwd, masks_fwd = synthesize_scene(spec, seed=4)
    flows_bwd, masks_bwd = [], []
    for i in range(6):
        fb = estimate_flow(seq.frames[i + 1], seq.frames[i], block_size=4, radius=4, pair=(i + 1, i))
        ff = estimate_flow(seq.frames[i], seq.frames[i + 1], block_size=4, radius=4, pair=(i, i + 1))
        flows_bwd.append(fb)
        masks_bwd.append(occlusion_mask(fb, ff))
    plan = KeyframePlan(omega=[0, 3, 6], s_min=1, s_max=3)
    edited = np.stack([seq.frames[k] for k in plan.omega])
    out = interpolate_nonkeyframes(seq, edited, plan, flows_fwd, masks_fwd, flows_bwd, masks_bwd)
    err = np.abs(out.frames - seq.frames)
    assert err.max() <= 0.1  # only recolor-fallback pixels deviate
    assert err.mean() <= 5e-3
    assert out.frames.min() >= 0.0 and out.frames.max() <= 1.0


def test_interpolate_requires_matching_counts():
    video = FrameSequence(np.zeros((3, 4, 4, 3)))
    plan = KeyframePlan(omega=[0, 2], s_min=1, s_max=2)
    with pytest.raises(ContractError):
        interpolate_nonkeyframes(video, np.zeros((2, 4, 4, 3)), plan, [], [], [], [])
