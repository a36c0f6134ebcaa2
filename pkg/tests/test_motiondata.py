import numpy as np
import pytest

from quatmotion import motiondata as md
from quatmotion import rotmath as rm
from quatmotion.kinematics import forward_kinematics

from conftest import random_unit_quats


def test_clip_applies_continuity(rng, gait):
    skel, clip, _ = gait
    rots = clip.rotations.copy()
    flips = rng.random(clip.num_frames) < 0.5
    rots[flips] *= -1
    fixed = md.MotionClip(skel, clip.frame_rate, clip.root_positions.copy(),
                          rots)
    dots = np.sum(fixed.rotations[1:] * fixed.rotations[:-1], axis=-1)
    assert (dots >= 0).all()


def test_clip_shape_validation(gait):
    skel, clip, _ = gait
    with pytest.raises(ValueError):
        md.MotionClip(skel, 25.0, clip.root_positions[:-1],
                      clip.rotations)


def test_qmc_round_trip(tmp_path, gait):
    skel, clip, _ = gait
    p = tmp_path / "clip.qmc"
    md.save_clip(p, clip)
    back = md.load_clip(p)
    assert back.frame_rate == clip.frame_rate
    assert back.skeleton.names == skel.names
    assert np.abs(back.rotations - clip.rotations).max() < 1e-6
    # float32 storage is stable: writing the loaded clip again is bit-exact
    md.save_clip(p, back)
    again = md.load_clip(p)
    assert np.array_equal(again.rotations, back.rotations)
    assert np.array_equal(again.root_positions, back.root_positions)


def test_dataset_round_trip(tmp_path, corpus):
    skel, clips = corpus
    md.save_dataset(tmp_path / "ds", clips)
    back = md.load_dataset(tmp_path / "ds")
    assert len(back) == len(clips)
    assert [c.num_frames for c in back] == [c.num_frames for c in clips]


def test_downsample_partitions_frames(gait):
    skel, clip, _ = gait
    parts = md.downsample_all_phases(clip, 4)
    assert len(parts) == 4
    assert sum(p.num_frames for p in parts) == clip.num_frames
    assert parts[0].frame_rate == pytest.approx(clip.frame_rate / 4)
    assert np.array_equal(parts[1].rotations, clip.rotations[1::4])


def test_mirror_is_involution(gait):
    skel, clip, _ = gait
    mirrored = md.mirror(clip, md.SYNTH_SWAP_MAP)
    back = md.mirror(mirrored, md.SYNTH_SWAP_MAP)
    assert np.abs(back.rotations - clip.rotations).max() < 1e-12
    assert np.abs(back.root_positions - clip.root_positions).max() < 1e-12


def test_mirror_matches_reflected_fk(gait):
    skel, clip, _ = gait
    mirrored = md.mirror(clip, md.SYNTH_SWAP_MAP)
    pos = clip.positions()
    mpos = mirrored.positions()
    perm = md._swap_permutation(skel, md.SYNTH_SWAP_MAP)
    reflected = pos[:, perm].copy()
    reflected[..., 0] *= -1
    assert np.abs(mpos - reflected).max() < 1e-9


def test_mirror_rejects_bad_map(gait):
    skel, clip, _ = gait
    with pytest.raises(ValueError):
        md.mirror(clip, {"l_foot": "r_upleg"})


def test_rotate_clip_fk_oracle(gait):
    skel, clip, _ = gait
    ang = 1.1
    rot = md.rotate_clip(clip, ang)
    q = rm.axis_angle_quat([0, 1, 0], ang)
    want = np.array([rm.rotate_vector(q, p) for p in clip.positions()[5]])
    assert np.abs(rot.positions()[5] - want).max() < 1e-9


def test_spin_clip_sweeps_yaw(gait):
    skel, clip, _ = gait
    spun = md.spin_clip(clip, revolutions=2.0)
    assert spun.num_frames == clip.num_frames
    # root orientation relative to the original advances uniformly
    rel = rm.qmul(spun.rotations[:, 0], rm.qconj(clip.rotations[:, 0]))
    steps = rm.quat_geodesic_angle(rel[1:], rel[:-1])
    assert np.abs(steps - steps[0]).max() < 1e-6
    assert steps[0] > 0
    # total sweep covers the requested revolutions
    total = steps.sum()
    assert total == pytest.approx(
        2 * np.pi * 2.0 * (1 - 1 / clip.num_frames), rel=0.3)


def test_prune_constant_joints(corpus):
    skel, clips = corpus
    frozen = []
    for c in clips:
        rots = c.rotations.copy()
        rots[:, 2] = [1.0, 0, 0, 0]
        frozen.append(md.MotionClip(skel, c.frame_rate,
                                    c.root_positions.copy(), rots))
    baseline = md.prune_constant_joints(skel, clips)
    pruned = md.prune_constant_joints(skel, frozen)
    assert not pruned.dof_active[2]
    assert pruned.dof_active[0]  # root never pruned
    assert pruned.dof_active[skel.names.index("l_upleg")]
    assert pruned.num_active == baseline.num_active - baseline.dof_active[2]


def test_spline_circle_curvature():
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    r = 2.0
    pts = np.stack([r * np.cos(t), np.zeros_like(t), r * np.sin(t)], axis=1)
    sp = md.fit_spline(pts, segment_length=0.1)
    # the first segment has no predecessor, so its turn is defined as zero
    assert np.abs(np.abs(sp.curvatures[1:]) - 1 / r).max() < 2e-2
    assert np.abs(np.abs(np.median(sp.curvatures)) - 1 / r) < 2e-3
    chords = np.linalg.norm(np.diff(sp.points, axis=0), axis=1)
    assert np.abs(chords - 0.1).max() < 1e-12


def test_spline_straight_line():
    pts = np.stack([np.linspace(0, 5, 50), np.zeros(50),
                    np.zeros(50)], axis=1)
    sp = md.fit_spline(pts, segment_length=0.5)
    assert np.abs(sp.curvatures).max() < 1e-12
    assert np.allclose(sp.tangents, [1.0, 0.0])


def test_gait_contacts_and_frequency(gait):
    skel, clip, feats = gait
    _, _, ref = md.synth_gait(frequency=1.2, speed=1.0, duration=10, seed=0)
    li = skel.names.index("l_foot")
    ri = skel.names.index("r_foot")
    got = md.extract_gait_features(clip, li, ri)
    assert not got.degenerate
    for found, truth in ((got.left_contacts, ref.left_contacts),
                         (got.right_contacts, ref.right_contacts)):
        for frame in found:
            assert np.abs(truth - frame).min() <= 1
    mid = slice(20, clip.num_frames - 20)
    assert np.abs(got.frequency[mid].mean() - 1.2) / 1.2 < 0.01
    assert np.abs(got.local_speed[mid].mean() - 1.0) < 0.02


def test_gait_stationary_clip_degenerate(gait):
    skel, clip, _ = gait
    still = md.MotionClip(skel, clip.frame_rate,
                          np.zeros_like(clip.root_positions),
                          np.tile(clip.rotations[0], (clip.num_frames, 1, 1)))
    feats = md.extract_gait_features(still, skel.names.index("l_foot"),
                                     skel.names.index("r_foot"))
    assert feats.degenerate
    assert len(feats.left_contacts) == 0
    assert np.allclose(feats.local_speed, 0.0)


def test_gait_phase_convention(gait):
    skel, clip, feats = gait
    got = md.extract_gait_features(clip, skel.names.index("l_foot"),
                                   skel.names.index("r_foot"))
    # phase hits 0 mod 2pi at left contacts, pi at right contacts
    lphase = np.mod(got.phase[got.left_contacts], 2 * np.pi)
    lerr = np.minimum(lphase, 2 * np.pi - lphase)
    rerr = np.abs(np.mod(got.phase[got.right_contacts], 2 * np.pi) - np.pi)
    assert np.median(lerr) < 0.2
    assert np.median(rerr) < 0.2


def test_episode_sampler_uniform_and_seeded(corpus):
    skel, clips = corpus
    s1 = md.EpisodeSampler(clips, episode_length=20, seed=5)
    s2 = md.EpisodeSampler(clips, episode_length=20, seed=5)
    b1 = s1.sample(4)
    b2 = s2.sample(4)
    assert np.array_equal(b1["rotations"], b2["rotations"])
    assert b1["rotations"].shape == (4, 20, skel.num_active, 4)
    assert b1["root_positions"].shape == (4, 20, 3)


def test_episode_sampler_rejects_too_long(corpus):
    skel, clips = corpus
    with pytest.raises(ValueError):
        md.EpisodeSampler(clips, episode_length=10 ** 6)
