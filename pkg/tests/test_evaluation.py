import numpy as np
import pytest

from quatmotion import evaluation as ev
from quatmotion import motiondata as md
from quatmotion import rotmath as rm

from conftest import random_unit_quats


def test_zero_velocity_repeats_last_frame(rng):
    prefix = random_unit_quats(rng, (6, 3))
    pred = ev.baseline_zero_velocity(prefix, 4)
    assert pred.shape == (4, 3, 4)
    assert np.array_equal(pred, np.repeat(prefix[-1][None], 4, axis=0))


def test_running_average_matches_slerp_midpoint(rng):
    # for two nearby quats the window-2 average is the slerp midpoint
    a = np.array([1.0, 0, 0, 0])
    b = rm.slerp(a, random_unit_quats(rng, ()), 0.01)
    prefix = np.stack([a, b])[:, None, :]
    avg = ev.baseline_running_average(prefix, 1, window=2)[0, 0]
    mid = rm.slerp(a, b, 0.5)
    assert np.abs(avg - mid).max() < 1e-6


def test_protocol_descriptors():
    std = ev.EvalProtocol.standard()
    prop = ev.EvalProtocol.proposed()
    assert std.samples_per_sequence == 4
    assert prop.samples_per_sequence == 128
    assert std.horizon_frames == [2, 4, 8, 10]


def test_run_protocol_deterministic(corpus):
    skel, clips = corpus
    proto = ev.EvalProtocol.standard(seed=3)
    r1 = ev.run_protocol(ev.baseline_zero_velocity, clips, proto)
    r2 = ev.run_protocol(ev.baseline_zero_velocity, clips, proto)
    assert r1.per_sample == r2.per_sample


def test_run_protocol_zero_on_constant_clip(corpus):
    skel, clips = corpus
    const = md.MotionClip(skel, 25.0, np.zeros((80, 3)),
                          np.tile(clips[0].rotations[5], (80, 1, 1)))
    rep = ev.run_protocol(ev.baseline_zero_velocity, [const],
                          ev.EvalProtocol.standard())
    assert rep.overall_mean(80) == pytest.approx(0.0, abs=1e-9)


def test_run_protocol_skips_short_clips(corpus):
    skel, clips = corpus
    short = clips[0].slice(0, 5)
    with pytest.warns(UserWarning):
        rep = ev.run_protocol(ev.baseline_zero_velocity,
                              [short, clips[0]], ev.EvalProtocol.standard())
    assert rep.skipped_clips == 1


def test_report_csv(tmp_path, corpus):
    skel, clips = corpus
    rep = ev.run_protocol(ev.baseline_zero_velocity, clips,
                          ev.EvalProtocol.standard())
    p = tmp_path / "report.csv"
    rep.to_csv(p, ci=True)
    lines = p.read_text().strip().splitlines()
    assert len(lines) > 1
    assert "mean_error" in lines[0]


def test_bootstrap_ci_properties(rng):
    lo, hi = ev.bootstrap_ci(np.full(20, 3.3))
    assert lo == hi == pytest.approx(3.3)
    x = rng.normal(size=300)
    lo, hi = ev.bootstrap_ci(x, quantiles=(2.5, 97.5))
    assert lo <= x.mean() <= hi
    width95 = hi - lo
    lo, hi = ev.bootstrap_ci(x)
    assert hi - lo < width95
    with pytest.raises(ValueError):
        ev.bootstrap_ci(np.array([]))


def test_tail_mass():
    errs = np.arange(100.0)
    assert ev.tail_mass(errs, np.percentile(errs, 99)) == pytest.approx(0.01)
    assert ev.tail_mass(errs, 1e9) == 0.0


def test_detect_plateau():
    assert ev.detect_plateau([1.0, 1.0, 1.0]) == 0
    assert ev.detect_plateau([1.0, 0.5, 0.3, 0.29, 0.285]) >= 2


def test_ablate_conditioning():
    table = ev.ablate_conditioning(lambda n: 1.0 / n, [1, 2, 4])
    assert table == [(1, 1.0), (2, 0.5), (4, 0.25)]


def test_position_network_free_run(corpus):
    skel, clips = corpus
    net = ev.PositionNetwork(skel.num_joints, hidden=16, seed=0)
    pos = clips[0].positions()[:10]
    pred = net.free_run(pos, 3)
    assert pred.shape == (3, skel.num_joints, 3)
    assert np.isfinite(pred).all()


def test_bone_length_spread_zero_for_fk(corpus):
    skel, clips = corpus
    assert ev.bone_length_spread(clips[0].positions(), skel) < 1e-9
