import numpy as np
import pytest

from trocarnav.geometry import Twist, pseudo_inverse
from trocarnav.hierarchy import (
    Limits,
    PriorityStack,
    saturate,
    solve_single,
    solve_two_level,
    solve_two_level_array,
    solve_two_level_projected,
)
from trocarnav.tasks import TaskSignal


def task(L, rate):
    L = np.atleast_2d(np.asarray(L, float))
    return TaskSignal(np.zeros(len(L)), L, rate)


def random_stack(rng):
    m1, m2 = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    r1 = int(rng.integers(1, m1 + 1))
    L1 = rng.normal(size=(m1, r1)) @ rng.normal(size=(r1, 6))
    e1 = L1 @ rng.normal(size=6)  # feasible: in range(L1)
    L2 = rng.normal(size=(m2, 6))
    return PriorityStack(task(L1, e1), task(L2, rng.normal(size=m2)))


def test_solve_single_examples(rng):
    assert np.array_equal(solve_single(task(rng.normal(size=(3, 6)), np.zeros(3))).as_array(), np.zeros(6))
    tw = solve_single(task(np.hstack([np.eye(3), np.zeros((3, 3))]), [1, 2, 3]))
    assert np.allclose(tw.as_array(), [1, 2, 3, 0, 0, 0])
    for _ in range(100):
        L = rng.normal(size=(int(rng.integers(1, 7)), 6))
        r = rng.normal(size=len(L))
        assert np.linalg.norm(L @ solve_single(task(L, r)).as_array() - r) <= 1e-8 * (1 + np.linalg.norm(r))


def test_invertible_primary_suppresses_secondary(rng):
    L1 = rng.normal(size=(6, 6)) + 4 * np.eye(6)
    e1 = rng.normal(size=6)
    s = PriorityStack(task(L1, e1), task(rng.normal(size=(3, 6)), rng.normal(size=3)))
    assert np.allclose(solve_two_level(s).as_array(), np.linalg.solve(L1, e1), atol=1e-10)


def test_independent_tasks_match_stacked_least_squares(rng):
    L1 = np.hstack([np.eye(3), np.zeros((3, 3))])
    L2 = np.hstack([np.zeros((3, 3)), np.eye(3)])
    e1, e2 = rng.normal(size=3), rng.normal(size=3)
    x = solve_two_level(PriorityStack(task(L1, e1), task(L2, e2))).as_array()
    ref = np.linalg.lstsq(np.vstack([L1, L2]), np.r_[e1, e2], rcond=None)[0]
    assert np.allclose(x, ref, atol=1e-12)


def test_conflicting_tasks(rng):
    L = rng.normal(size=(3, 6))
    e1 = L @ rng.normal(size=6)
    x = solve_two_level(PriorityStack(task(L, e1), task(L, -e1))).as_array()
    assert np.allclose(L @ x, e1, atol=1e-10)
    assert np.linalg.norm(L @ x - (-e1)) == pytest.approx(2 * np.linalg.norm(e1))


def test_random_stacks_properties(rng):
    for _ in range(1000):
        s = random_stack(rng)
        L1, e1 = s.primary.L, s.primary.desired_rate
        x = solve_two_level_array(s)
        assert np.linalg.norm(L1 @ x - e1) <= 1e-8 * (1 + np.linalg.norm(e1))
        x1 = pseudo_inverse(L1) @ e1
        assert np.linalg.norm(L1 @ (x - x1)) <= 1e-8 * (1 + np.linalg.norm(x))
        assert np.linalg.norm(solve_two_level_projected(s) - x) <= 1e-8 * (1 + np.linalg.norm(x))
        P = np.eye(6) - pseudo_inverse(L1) @ L1
        assert np.linalg.norm(P @ P - P) <= 1e-9


def test_secondary_optimal_in_null_space(rng):
    # among x = x1 + N z (N an orthonormal null-space basis of L1), the result minimizes the secondary residual
    for _ in range(100):
        s = random_stack(rng)
        L1, e1, L2, e2 = s.primary.L, s.primary.desired_rate, s.secondary.L, s.secondary.desired_rate
        x = solve_two_level_array(s)
        _, S, Vt = np.linalg.svd(L1)
        rank = int(np.sum(S > 1e-9 * S[0]))
        N = Vt[rank:].T
        x1 = np.linalg.lstsq(L1, e1, rcond=None)[0]
        best = x1
        if N.shape[1]:
            best = x1 + N @ np.linalg.lstsq(L2 @ N, e2 - L2 @ x1, rcond=None)[0]
        assert np.linalg.norm(L2 @ x - e2) <= np.linalg.norm(L2 @ best - e2) + 1e-8 * (1 + np.linalg.norm(e2))


def test_unreachable_secondary_reduces_to_single(rng):
    L1 = rng.normal(size=(6, 6))
    e1 = rng.normal(size=6)
    s = PriorityStack(task(L1, e1), task(L1[:2], rng.normal(size=2)))
    assert np.allclose(solve_two_level(s).as_array(), solve_single(s.primary).as_array(), atol=1e-9)
    # secondary inside the primary's row space: projected matrix is numerical residue only
    L1 = np.hstack([np.eye(3), np.zeros((3, 3))])
    s = PriorityStack(task(L1, [1, 2, 3]), task(L1 * 1e3, [5, 5, 5]))
    assert np.array_equal(solve_two_level(s).as_array(), solve_single(s.primary).as_array())


def test_no_secondary_equals_single(rng):
    t = task(rng.normal(size=(3, 6)), rng.normal(size=3))
    assert np.array_equal(solve_two_level(PriorityStack(t)).as_array(), solve_single(t).as_array())


def test_saturation_scales_uniformly():
    lim = Limits(v_max=20, w_max=1)
    tw = saturate(Twist([30, 40, 0], [0, 0, 0.5]), lim)
    assert np.linalg.norm(tw.v) == pytest.approx(20)
    assert np.allclose(tw.w, [0, 0, 0.2])
    tw = saturate(Twist([1, 0, 0], [0, 3, 4]), lim)
    assert np.linalg.norm(tw.w) == pytest.approx(1) and np.allclose(tw.v, [0.2, 0, 0])
    small = Twist([1, 0, 0], [0, 0, 0.1])
    assert saturate(small, lim) is small
    assert saturate(Twist([100, 0, 0]), None).v[0] == 100
