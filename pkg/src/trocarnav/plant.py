"""Ideal kinematic plant (numerical twin) and tool/wall clearance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import Curve3D
from .geometry import Pose, Twist, exp_so3, integrate_pose


@dataclass(frozen=True)
class PlantState:
    w_T_e: Pose = field(default_factory=Pose)
    t: float = 0.0
    step_count: int = 0


def plant_step(ps: PlantState, e_twist: Twist, T_e: float) -> PlantState:
    """Integrate an e-frame twist over one period."""
    if T_e <= 0:
        raise ValueError("T_e must be positive")
    R = ps.w_T_e.R
    w_twist = Twist(R @ e_twist.v, R @ e_twist.w)
    n = ps.step_count + 1
    return PlantState(integrate_pose(ps.w_T_e, w_twist, T_e), n * T_e, n)


class Plant:
    """Stateful wrapper used by the control loop and the socket server.

    ``noise`` = (translation mm, rotation rad) amplitudes of zero-mean uniform
    noise added to the *reported* pose only.
    """

    def __init__(self, w_T_e: Pose, T_e: float, noise: tuple[float, float] = (0.0, 0.0), seed: int = 0):
        self.state = PlantState(w_T_e)
        self.T_e = float(T_e)
        self.noise = noise
        self._rng = np.random.default_rng(seed)

    def step(self, e_twist: Twist) -> PlantState:
        self.state = plant_step(self.state, e_twist, self.T_e)
        return self.state

    def measured_pose(self) -> Pose:
        pose = self.state.w_T_e
        a_t, a_r = self.noise
        if a_t == 0 and a_r == 0:
            return pose
        dt = self._rng.uniform(-a_t, a_t, 3)
        dr = self._rng.uniform(-a_r, a_r, 3)
        return Pose(exp_so3(dr) @ pose.R, pose.t + dt)


def _segment_distances(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between every segment pair (broadcast over leading axes)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    c = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-12 * a * e, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
        s = np.where(t < 0.0, np.clip(-c / a, 0.0, 1.0), s)
        s = np.where(t > 1.0, np.clip((b - c) / a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    diff = (p0 + s[..., None] * d1) - (q0 + t[..., None] * d2)
    return np.linalg.norm(diff, axis=-1)


def _segments(c: Curve3D) -> tuple[np.ndarray, np.ndarray]:
    pts = c.points
    ends = np.roll(pts, -1, axis=0) if c.closed else pts[1:]
    return pts[: len(ends)], ends


def clearance(tool_in_w: Curve3D, wall_in_w: Curve3D) -> float:
    """Minimum distance between the tool polyline and the wall polyline."""
    a0, a1 = _segments(tool_in_w)
    b0, b1 = _segments(wall_in_w)
    d = _segment_distances(a0[:, None], a1[:, None], b0[None, :], b1[None, :])
    return float(d.min())
