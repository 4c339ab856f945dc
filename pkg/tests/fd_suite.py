"""Finite-difference validation of the interaction matrices.

Each case builds a random non-singular configuration from analytic curves
(lines and circles, projected in closed form), differentiates the geometric
error numerically along each e-frame twist direction, and compares with
the matrix the package builds from the same curve data.
"""

import numpy as np

from oracles import Circle, Line, fd_jacobian, random_rotation, rel_err
from trocarnav.curve import CurvePoint
from trocarnav.tasks import (
    Gains,
    pf_rate_matrix,
    pf_task,
    rcm_task,
    ucm_interaction,
)

EPS = 1e-6


def _cp(pos, k, C):
    return CurvePoint(np.asarray(pos, float), 0.0, np.asarray(k, float), np.asarray(C, float), 0)


def _random_tool(rng):
    """Straight or circular-arc tool in the e-frame, as an analytic curve."""
    if rng.random() < 0.4:
        return Line(rng.normal(size=3) * 5, rng.normal(size=3))
    r = rng.uniform(8.0, 60.0)
    return Circle(rng.normal(size=3) * 5, rng.normal(size=3), r)


def _random_pose(rng):
    return random_rotation(rng), rng.normal(size=3) * 30


def _point_near(curve, rng, lo=0.05, hi=2.0):
    base = curve.c + curve.r * np.array([1.0, 0, 0]) if isinstance(curve, Circle) else curve.a
    if isinstance(curve, Circle):
        # a point on the circle: any radial direction in its plane
        v = rng.normal(size=3)
        v -= (v @ curve.n) * curve.n
        base = curve.c + curve.r * v / np.linalg.norm(v)
    foot, k, _ = curve.project(base)
    off = rng.normal(size=3)
    off -= (off @ k) * k
    return foot + rng.uniform(lo, hi) * off / np.linalg.norm(off)


def pf_case(rng):
    R0, t0 = _random_pose(rng)
    tip = rng.normal(size=3) * 30
    v_t = rng.normal(size=3)
    L = pf_task(tip, v_t).L

    def f(R, t):
        return R0.T @ (R @ tip + t - t0)

    return rel_err(L, fd_jacobian(f, R0, t0, EPS))


def pf_rate_case(rng):
    """d(d_pf)/dt = (I - kk^T/(1 - d.C)) dq/dt for a fixed path (validation identity)."""
    path = Circle(rng.normal(size=3), rng.normal(size=3), rng.uniform(2.0, 20.0))
    q = _point_near(path, rng, 0.01, 0.5 * path.r)
    foot, k, C = path.project(q)
    M = pf_rate_matrix(q - foot, _cp(foot, k, C))
    J = np.zeros((3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = EPS
        J[:, i] = ((q + e - path.project(q + e)[0]) - (q - e - path.project(q - e)[0])) / (2 * EPS)
    return rel_err(M, J)


def rcm_case(rng):
    R0, t0 = _random_pose(rng)
    tool = _random_tool(rng)
    O_e = _point_near(tool, rng)
    O_w = R0 @ O_e + t0
    foot, k, C = tool.project(O_e)
    d_rcm = O_e - foot
    L = rcm_task(d_rcm, _cp(foot, k, C), O_e, Gains()).L

    def f(R, t):
        O = R.T @ (O_w - t)
        return O - tool.project(O)[0]

    return rel_err(L, fd_jacobian(f, R0, t0, EPS))


def ucm_case(rng):
    R0, t0 = _random_pose(rng)
    tool = _random_tool(rng)
    O_e = _point_near(tool, rng, 0.01, 1.0)
    O_w = R0 @ O_e + t0
    tp_e, k_t, C_t = tool.project(O_e)
    tp_w = R0 @ tp_e + t0
    # rim around the orifice, roughly facing the tool, foot well off its center
    rho = rng.uniform(1.0, 5.0)
    n_w = R0 @ k_t + 0.3 * rng.normal(size=3)
    off = rng.normal(size=3)
    off -= (off @ n_w) * n_w / (n_w @ n_w)
    wall = Circle(tp_w + rng.uniform(0.2, 0.8) * rho * off / np.linalg.norm(off), n_w, rho)
    hp_w, k_h, C_h = wall.project(tp_w)
    d_ucm = R0.T @ (hp_w - tp_w)
    hp = _cp(R0.T @ (hp_w - t0), R0.T @ k_h, R0.T @ C_h)
    L = ucm_interaction(d_ucm, hp, _cp(tp_e, k_t, C_t), O_e - tp_e, O_e)

    def f(R, t):
        O = R.T @ (O_w - t)
        tp = tool.project(O)[0]
        tpw = R @ tp + t
        return R.T @ (wall.project(tpw)[0] - tpw)

    return rel_err(L, fd_jacobian(f, R0, t0, EPS))


CASES = {"L_pf": pf_case, "L_rcm": rcm_case, "L_ucm": ucm_case, "pf_rate": pf_rate_case}


def run(name, n=100, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([CASES[name](rng) for _ in range(n)])
