import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quatmotion import rotmath as rm

from conftest import random_unit_quats


unit_quat = st.builds(
    lambda w, x, y, z: np.array([w, x, y, z]) / np.linalg.norm([w, x, y, z]),
    *(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3) for _ in range(4)))


def quat_matrix_oracle(q):
    """Rotation matrix built from first principles for cross-checking."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])


@given(unit_quat, unit_quat)
@settings(max_examples=100, deadline=None)
def test_qmul_matches_matrix_product(a, b):
    got = rm.quat_to_matrix(rm.qmul(a, b))
    want = quat_matrix_oracle(a) @ quat_matrix_oracle(b)
    assert np.allclose(got, want, atol=1e-9)


@given(unit_quat, st.tuples(*(st.floats(-5, 5) for _ in range(3))))
@settings(max_examples=100, deadline=None)
def test_rotate_vector_matches_matrix(q, v):
    v = np.array(v)
    assert np.allclose(rm.rotate_vector(q, v), quat_matrix_oracle(q) @ v,
                       atol=1e-9)


@given(unit_quat)
@settings(max_examples=50, deadline=None)
def test_conjugate_inverts(q):
    ident = rm.qmul(q, rm.qconj(q))
    assert np.allclose(ident, [1, 0, 0, 0], atol=1e-12)


@pytest.mark.parametrize("order", rm.TAIT_BRYAN_ORDERS)
def test_euler_round_trip_all_orders(order, rng):
    q = random_unit_quats(rng, (500,))
    q[q[:, 0] < 0] *= -1
    e = rm.quat_to_euler(q, order)
    back = rm.euler_to_quat(e.angles, order)
    back[back[:, 0] < 0] *= -1
    assert np.abs(back - q).max() < 1e-9


@pytest.mark.parametrize("order", rm.TAIT_BRYAN_ORDERS)
def test_euler_to_quat_matches_axis_composition(order, rng):
    angles = rng.uniform(-np.pi, np.pi, size=(20, 3))
    for row in angles:
        want = np.array([1.0, 0, 0, 0])
        for axis, ang in zip(order, row):
            unit = np.zeros(3)
            unit["xyz".index(axis)] = 1.0
            want = rm.qmul(want, rm.axis_angle_quat(unit, ang))
        got = rm.euler_to_quat(row, order)
        assert np.allclose(got, want * np.sign(want[0] * got[0] or 1),
                           atol=1e-12)


def test_gimbal_lock_representative_round_trips():
    for order in rm.TAIT_BRYAN_ORDERS:
        for sign in (1.0, -1.0):
            angles = np.array([0.3, sign * np.pi / 2, -0.7])
            q = rm.euler_to_quat(angles, order)
            e = rm.quat_to_euler(q, order)
            assert e.singular.all()
            assert e.angles[2] == 0.0
            back = rm.euler_to_quat(e.angles, order)
            assert min(np.abs(back - q).max(), np.abs(back + q).max()) < 1e-9


def test_expmap_round_trip(rng):
    e = rng.normal(size=(500, 3))
    got = rm.quat_to_expmap(rm.expmap_to_quat(e))
    # representative has angle in [0, pi]
    theta = np.linalg.norm(e, axis=-1, keepdims=True)
    wrapped = np.mod(theta, 2 * np.pi)
    canon = np.where(wrapped > np.pi, (wrapped - 2 * np.pi) / theta,
                     wrapped / theta) * e
    assert np.abs(got - canon).max() < 1e-9


def test_expmap_small_angle_series():
    e = np.array([1e-10, 0, 0])
    q = rm.expmap_to_quat(e)
    assert np.allclose(q, [1, 5e-11, 0, 0], atol=1e-15)


def test_wrap_angle_examples():
    assert rm.wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)
    assert rm.wrap_angle(-np.pi - 0.1) == pytest.approx(np.pi - 0.1)
    x = np.linspace(-10, 10, 101)
    w = rm.wrap_angle(x)
    assert ((w >= -np.pi) & (w <= np.pi)).all()
    assert np.allclose(np.cos(w), np.cos(x))
    assert np.allclose(np.sin(w), np.sin(x))


def test_angle_distance_shortest_path():
    a = np.pi - 0.1
    b = -np.pi + 0.1
    assert rm.angle_distance_l1(a, b) == pytest.approx(0.2)


def test_fix_continuity_nonnegative_dots(rng):
    q = random_unit_quats(rng, (200,))
    flips = rng.random(200) < 0.5
    q[flips] *= -1
    fixed = rm.fix_continuity(q)
    dots = np.sum(fixed[1:] * fixed[:-1], axis=-1)
    assert (dots >= 0).all()
    # same rotation per frame
    assert np.allclose(np.abs(np.sum(fixed * q, axis=-1)), 1.0, atol=1e-12)
    # idempotent
    assert np.array_equal(rm.fix_continuity(fixed), fixed)


def test_slerp_constant_angular_velocity(rng):
    a = random_unit_quats(rng, ())
    b = random_unit_quats(rng, ())
    t = np.linspace(0, 1, 11)
    path = np.array([rm.slerp(a, b, ti) for ti in t])
    steps = rm.quat_geodesic_angle(path[:-1], path[1:])
    assert np.allclose(steps, steps[0], atol=1e-9)
    assert np.allclose(path[0], a) or np.allclose(path[0], -a)


def test_quat_mean_recovers_cluster_center(rng):
    center = random_unit_quats(rng, ())
    noise = rng.normal(scale=1e-3, size=(50, 4))
    cluster = center + noise
    cluster /= np.linalg.norm(cluster, axis=-1, keepdims=True)
    signs = np.where(rng.random(50) < 0.5, 1.0, -1.0)
    mean = rm.quat_mean(cluster * signs[:, None])
    assert min(np.abs(mean - center).max(), np.abs(mean + center).max()) < 1e-3


def test_normalize_rejects_degenerate():
    with pytest.raises(rm.DegenerateQuaternionError):
        rm.normalize(np.zeros(4))
