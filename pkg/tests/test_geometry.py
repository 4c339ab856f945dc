import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import body_screw, cross, random_rotation, rodrigues
from trocarnav.geometry import (
    AngleAxis,
    Pose,
    Twist,
    exp_so3,
    integrate_pose,
    is_rotation,
    l_theta_u,
    pseudo_inverse,
    rotation_to_angle_axis,
    skew,
    twist_transform,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec = st.tuples(finite, finite, finite).map(np.array)


def test_skew_zero_and_basis():
    assert np.array_equal(skew([0, 0, 0]), np.zeros((3, 3)))
    assert np.allclose(skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])


@given(vec, vec)
def test_skew_matches_component_cross(v, w):
    assert np.allclose(skew(v) @ w, cross(v, w), atol=1e-9 * (1 + np.abs(v).max() * np.abs(w).max()))
    S = skew(v)
    assert np.array_equal(S + S.T, np.zeros((3, 3)))


def test_angle_axis_identity_and_quarter_turn():
    a = rotation_to_angle_axis(np.eye(3))
    assert a.theta == 0 and np.array_equal(a.u, [0, 0, 1])
    a = rotation_to_angle_axis(rodrigues([0, 0, 1], np.pi / 2))
    assert a.theta == pytest.approx(np.pi / 2)
    assert np.allclose(a.u, [0, 0, 1])


def test_angle_axis_round_trip(rng):
    for _ in range(500):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        th = rng.uniform(1e-6, np.pi - 1e-6)
        a = rotation_to_angle_axis(rodrigues(u, th))
        assert a.theta == pytest.approx(th, abs=1e-8)
        assert np.allclose(a.u, u, atol=1e-7)
        assert np.linalg.norm(exp_so3(a.vector) - rodrigues(u, th)) < 1e-8


def test_angle_axis_near_pi_branch(rng):
    for _ in range(100):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        th = np.pi - rng.uniform(0, 1e-4)
        R = rodrigues(u, th)
        a = rotation_to_angle_axis(R)
        assert np.linalg.norm(a.to_matrix() - R) < 1e-8


def test_angle_axis_rejects_non_rotation():
    with pytest.raises(ValueError):
        rotation_to_angle_axis(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        rotation_to_angle_axis(2 * np.eye(3))


def test_l_theta_u_values():
    assert np.array_equal(l_theta_u(AngleAxis(0.0)), np.eye(3))
    th = np.pi / 2
    u = np.array([0.0, 0.0, 1.0])
    U = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0.0]])
    sinc = lambda x: np.sin(x) / x  # noqa: E731
    expected = np.eye(3) - th / 2 * U + (1 - sinc(th) / sinc(th / 2) ** 2) * U @ U
    assert np.allclose(l_theta_u(AngleAxis(th, u)), expected, atol=1e-12)
    with pytest.raises(ValueError):
        l_theta_u(AngleAxis(np.pi, u))


def test_l_theta_u_finite_difference(rng):
    # theta*u of R(t) = exp(t w) R0: d/dt = L w (angular velocity in the parent frame)
    for _ in range(100):
        u = rng.normal(size=3)
        R0 = rodrigues(u, rng.uniform(0.05, np.pi - 0.2))
        w = rng.normal(size=3)
        h = 1e-6
        f = lambda t: rotation_to_angle_axis(rodrigues(w, np.linalg.norm(w) * t) @ R0).vector  # noqa: E731
        fd = (f(h) - f(-h)) / (2 * h)
        L = l_theta_u(rotation_to_angle_axis(R0))
        assert np.linalg.norm(fd - L @ w) <= 1e-4 * max(1, np.linalg.norm(fd))
        # same rate from a body-frame angular velocity
        g = lambda t: rotation_to_angle_axis(R0 @ rodrigues(w, np.linalg.norm(w) * t)).vector  # noqa: E731
        fd = (g(h) - g(-h)) / (2 * h)
        assert np.linalg.norm(fd - L @ R0 @ w) <= 1e-4 * max(1, np.linalg.norm(fd))


def test_l_theta_u_invertible_below_pi(rng):
    for th in np.linspace(0, np.pi - 0.1, 50):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        assert np.isfinite(np.linalg.cond(l_theta_u(AngleAxis(th, u))))


def test_twist_transform_blocks():
    assert np.array_equal(twist_transform(Pose()), np.eye(6))
    t = np.array([1.0, -2.0, 3.0])
    V = twist_transform(Pose.from_translation(t))
    assert np.array_equal(V[3:, 3:], np.eye(3))
    assert np.allclose(V[:3, 3:], skew(t))


def test_twist_transform_rigid_body(rng):
    # a pure rotation of the tip frame moves the e origin (at -R^T t seen from t) by w x r
    for _ in range(50):
        R, t = random_rotation(rng), rng.normal(size=3) * 20
        w_t = rng.normal(size=3)
        out = twist_transform(Pose(R, t)) @ np.concatenate([np.zeros(3), w_t])
        w_e = R @ w_t
        r = -t  # e origin relative to tip origin, in e coordinates
        assert np.allclose(out[:3], cross(w_e, r), atol=1e-9)
        assert np.allclose(out[3:], w_e)


def _penrose(M, P, tol):
    scale = max(1.0, np.linalg.norm(M))
    assert np.linalg.norm(M @ P @ M - M) <= tol * scale
    assert np.linalg.norm(P @ M @ P - P) <= tol * max(1.0, np.linalg.norm(P))
    assert np.linalg.norm((M @ P).T - M @ P) <= tol * scale
    assert np.linalg.norm((P @ M).T - P @ M) <= tol * scale


def test_pseudo_inverse_cases(rng):
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    assert np.allclose(pseudo_inverse(A), np.linalg.inv(A), atol=1e-9)
    assert np.array_equal(pseudo_inverse(np.zeros((3, 6))), np.zeros((6, 3)))
    for rank in range(0, 4):
        for _ in range(50):
            M = rng.normal(size=(3, rank)) @ rng.normal(size=(rank, 6)) if rank else np.zeros((3, 6))
            _penrose(M, pseudo_inverse(M), 1e-8)


def test_pseudo_inverse_scale_drops_residue():
    M = np.array([[1e-12, 0, 0, 0, 0, 0.0]])
    assert np.linalg.norm(pseudo_inverse(M)) > 1e11
    assert np.array_equal(pseudo_inverse(M, scale=1.0), np.zeros((6, 1)))


def test_integrate_pose_basic():
    p = Pose(random_rotation(np.random.default_rng(1)), [1, 2, 3])
    q = integrate_pose(p, Twist(), 0.1)
    assert np.allclose(q.R, p.R) and np.allclose(q.t, p.t)
    q = integrate_pose(Pose(), Twist([0, 0, 0], [0, 0, np.pi / 2]), 1.0)
    assert np.allclose(q.R, rodrigues([0, 0, 1], np.pi / 2), atol=1e-12)
    with pytest.raises(ValueError):
        integrate_pose(Pose(), Twist(), 0.0)


def test_integrate_pose_single_step_is_exact_screw(rng):
    # the linear part moves with the body, so one step equals T0 exp(dt xi_body)
    for _ in range(50):
        p = Pose(random_rotation(rng), rng.normal(size=3))
        v_b, w_b = rng.normal(size=3) * 5, rng.normal(size=3)
        dt = rng.uniform(0.01, 2.0)
        q = integrate_pose(p, Twist(p.R @ v_b, p.R @ w_b), dt)
        assert np.allclose(q.matrix(), body_screw(p.matrix(), v_b, w_b, dt), atol=1e-9)


def test_integrate_pose_many_steps_match_screw(rng):
    # 1000 steps of 0.008 s under a constant body twist, world twist refreshed each step
    for _ in range(10):
        p = Pose(random_rotation(rng), rng.normal(size=3))
        v_b, w_b = rng.normal(size=3) * 5, rng.normal(size=3) * 0.3
        q = p
        for _ in range(1000):
            q = integrate_pose(q, Twist(q.R @ v_b, q.R @ w_b), 0.008)
        ref = body_screw(p.matrix(), v_b, w_b, 8.0)
        assert np.linalg.norm(q.t - ref[:3, 3]) < 1e-3
        assert rotation_to_angle_axis(q.R.T @ ref[:3, :3]).theta < 1e-4


def test_integrate_pose_pure_translation_is_euler():
    q = integrate_pose(Pose(), Twist([1.0, 2.0, 3.0]), 0.5)
    assert np.allclose(q.t, [0.5, 1.0, 1.5])


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_integrate_pose_stays_orthonormal(seed):
    r = np.random.default_rng(seed)
    tw = Twist(r.normal(size=3), r.normal(size=3))
    p = Pose()
    for _ in range(20000):
        p = integrate_pose(p, tw, 0.008)
    assert np.linalg.norm(p.R.T @ p.R - np.eye(3)) <= 1e-9


def test_integrate_pose_orthonormal_long_run():
    tw = Twist([1, -2, 0.5], [0.3, -0.7, 1.1])
    p = Pose()
    for _ in range(100_000):
        p = integrate_pose(p, tw, 0.008)
    assert np.linalg.norm(p.R.T @ p.R - np.eye(3)) <= 1e-9
    assert is_rotation(p.R, 1e-9)


def test_pose_algebra(rng):
    a = Pose(random_rotation(rng), rng.normal(size=3))
    b = Pose(random_rotation(rng), rng.normal(size=3))
    assert np.allclose((a @ b).matrix(), a.matrix() @ b.matrix())
    assert np.allclose((a @ a.inverse()).matrix(), np.eye(4))
    pts = rng.normal(size=(5, 3))
    assert np.allclose(a.apply(pts), (a.matrix() @ np.c_[pts, np.ones(5)].T).T[:, :3])
    assert np.array_equal(Pose.from_list(a.to_list()).matrix(), a.matrix())
    with pytest.raises(ValueError):
        Twist([np.nan, 0, 0])


def test_angle_axis_rounding_near_identity():
    # trace rounding alone must not produce a tiny angle with an undefined axis
    R = np.eye(3) - 1.1e-16 * np.eye(3)
    a = rotation_to_angle_axis(R)
    assert a.theta == 0.0 and np.all(np.isfinite(a.u))
