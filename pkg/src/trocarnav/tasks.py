"""Task errors and interaction matrices.

Every task maps the end-effector twist ``(v, w)`` (velocity of the e-frame
origin and angular velocity, both in e coordinates) to the rate of its
error: ``de/dt = L @ twist``. Geometry handed to these functions (tool,
trocar, wall) is expressed in the e-frame unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import Curve3D, CurvePoint
from .geometry import (
    Pose,
    Twist,
    l_theta_u,
    rotation_to_angle_axis,
    skew,
    twist_transform,
)

SINGULAR_DENOMINATOR = 1e-6


class SingularConfigurationError(RuntimeError):
    """A projection-rate denominator vanished (foot at a curvature focal point)."""


@dataclass(frozen=True)
class Gains:
    lam: float = 1.0
    gamma: float = 1.0
    v_tis: float = 4.0
    beta_prime: float = -10.0
    gamma_c: float = -10.0
    sigma_max: float = 1.0
    sigma_min: float = 1.0
    sigma_step: float = 10.0
    d_min: float = 0.5
    d_max: float = 1.5
    T_e: float = 0.008

    def __post_init__(self):
        positive = ("lam", "gamma", "v_tis", "sigma_max", "sigma_min", "sigma_step", "T_e")
        for name in positive:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"gain {name} must be > 0, got {value}")
        for name in ("beta_prime", "gamma_c"):
            value = getattr(self, name)
            if not np.isfinite(value) or value >= 0:
                raise ValueError(f"gain {name} must be < 0, got {value}")
        if not 0 < self.d_min < self.d_max:
            raise ValueError("need 0 < d_min < d_max")


@dataclass(frozen=True)
class TaskSignal:
    e: np.ndarray
    L: np.ndarray
    desired_rate: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float).reshape(-1)
        L = np.asarray(self.L, dtype=float)
        rate = np.asarray(self.desired_rate, dtype=float).reshape(-1)
        if L.ndim != 2 or L.shape[1] != 6 or L.shape[0] != len(rate) or len(e) != len(rate):
            raise ValueError(f"inconsistent task dimensions e={e.shape} L={L.shape} rate={rate.shape}")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(L)) and np.all(np.isfinite(rate))):
            raise ValueError("task signal has non-finite entries")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "desired_rate", rate)

    @property
    def dim(self) -> int:
        return len(self.e)


def point_velocity_matrix(p) -> np.ndarray:
    """3x6 map from e-twist to the velocity of a point rigidly attached to e."""
    M = np.zeros((3, 6))
    M[:, :3] = np.eye(3)
    M[:, 3:] = -skew(p)
    return M


def projection_rate_matrix(k, C, d, sign: float = -1.0) -> np.ndarray:
    """Velocity of a projection foot per unit velocity of the projected point.

    For a point ``q`` with foot ``c(s)`` on a fixed curve, ``d = q - c(s)``
    and ``dc/dt = k k^T / (1 - d.C) dq/dt`` with ``C = dk/ds``. Pass
    ``sign=+1`` when ``d`` is given as ``c(s) - q``.
    """
    k = np.asarray(k, dtype=float)
    den = 1.0 + sign * float(np.dot(d, C))
    if abs(den) < SINGULAR_DENOMINATOR:
        raise SingularConfigurationError(f"projection-rate denominator {den:.3g}")
    return np.outer(k, k) / den


# approach

def approach_error(r_T_t: Pose) -> tuple[np.ndarray, object]:
    """Pose error of the tip frame w.r.t. the target frame.

    Translation part is the target origin seen from the tip; rotation part is
    theta*u of the tip orientation in the target frame.
    """
    aa = rotation_to_angle_axis(r_T_t.R)
    if aa.theta >= np.pi:
        raise ValueError("approach rotation at theta = pi is singular")
    t_target_in_tip = -r_T_t.R.T @ r_T_t.t
    return np.concatenate([t_target_in_tip, aa.vector]), aa


def approach_task(r_T_t: Pose, g: Gains, e_T_t: Pose | None = None) -> TaskSignal:
    """6D positioning task of the tip frame onto a target frame.

    ``L`` is the nominal ``blockdiag(-I, L_theta_u)`` pulled back to the
    e-twist through the fixed tip-to-e transform. The exact translation rows
    carry an extra ``skew(e_t)`` on the angular columns; that term only turns
    ``e_t`` and leaves its norm alone, so the decoupled law still shrinks
    ``||e_t||`` at rate ``gamma``.
    """
    e, aa = approach_error(r_T_t)
    L3d = np.zeros((6, 6))
    L3d[:3, :3] = -np.eye(3)
    # tip angular velocity is in the tip frame: d(theta u)/dt = L R w
    L3d[3:, 3:] = l_theta_u(aa) @ r_T_t.R
    V = twist_transform(e_T_t or Pose())
    return TaskSignal(e, L3d @ np.linalg.inv(V), -g.gamma * e)


def approach_command(r_T_t: Pose, g: Gains, e_T_t: Pose | None = None) -> tuple[Twist, Twist]:
    """Tip-frame and e-frame twists for the approach task.

    The block-diagonal matrix is inverted in closed form.
    """
    e, aa = approach_error(r_T_t)
    v_tip = g.gamma * e[:3]
    w_tip = -g.gamma * np.linalg.solve(l_theta_u(aa) @ r_T_t.R, e[3:])
    tip = Twist(v_tip, w_tip)
    V = twist_transform(e_T_t or Pose())
    return tip, Twist.from_array(V @ tip.as_array())


# path following

def pf_error(tip, path: Curve3D) -> tuple[np.ndarray, CurvePoint]:
    cp = path.project(tip)
    return np.asarray(tip, dtype=float) - cp.position, cp


def pf_beta(d_pf, cp: CurvePoint, g: Gains) -> float:
    """Return gain, made stronger or weaker on either side of a curved path."""
    side = float(np.sign(np.dot(d_pf, np.cross(cp.C, cp.k))))
    curv = float(np.linalg.norm(cp.C))
    return g.beta_prime * (1.0 + side * (1.0 - np.exp(g.gamma_c * curv)))


def pf_alpha(v_ret, g: Gains) -> float:
    excess = g.v_tis**2 - float(np.dot(v_ret, v_ret))
    return float(np.sqrt(excess)) if excess > 0 else 0.0


def pf_velocity(d_pf, cp: CurvePoint, g: Gains) -> np.ndarray:
    """Commanded tip velocity: advance along the tangent plus return to the path."""
    v_ret = pf_beta(d_pf, cp, g) * np.asarray(d_pf, dtype=float)
    return pf_alpha(v_ret, g) * cp.k + v_ret


def pf_rate_matrix(d_pf, cp: CurvePoint) -> np.ndarray:
    """``d(d_pf)/dt`` per unit tip velocity, for a path fixed in the frame of ``d_pf``."""
    return np.eye(3) - projection_rate_matrix(cp.k, cp.C, d_pf)


def pf_task(tip_in_e, v_t_in_e, d_pf_in_e=None) -> TaskSignal:
    L = point_velocity_matrix(tip_in_e)
    e = np.zeros(3) if d_pf_in_e is None else d_pf_in_e
    return TaskSignal(e, L, v_t_in_e)


# bilateral constraint (RCM)

def rcm_error(tool: Curve3D, O_r_in_e) -> tuple[np.ndarray, CurvePoint]:
    """Vector from the tool-body foot to the trocar point (e-frame)."""
    tp = tool.project(O_r_in_e)
    return np.asarray(O_r_in_e, dtype=float) - tp.position, tp


def rcm_foot_rate(d_rcm, tp: CurvePoint, O_r_in_e) -> np.ndarray:
    """3x6 map from e-twist to the sliding velocity of the foot along the tool."""
    trocar_rate = -point_velocity_matrix(O_r_in_e)
    return projection_rate_matrix(tp.k, tp.C, d_rcm) @ trocar_rate


def rcm_task(d_rcm, tp: CurvePoint, O_r_in_e, g: Gains) -> TaskSignal:
    # the trocar is fixed in the world, so in e it moves at -(v + w x O)
    P = projection_rate_matrix(tp.k, tp.C, d_rcm)
    L = -(np.eye(3) - P) @ point_velocity_matrix(O_r_in_e)
    return TaskSignal(d_rcm, L, -g.lam * np.asarray(d_rcm, dtype=float))


# unilateral constraint (UCM)

def ucm_error(tp_position, wall: Curve3D, O_r_in_e=None) -> tuple[np.ndarray, CurvePoint]:
    """Vector from the tool foot to the closest wall point (e-frame).

    Equal to ``(O - p_t) - (O - p_h)``; the trocar point cancels.
    """
    hp = wall.project(tp_position)
    return hp.position - np.asarray(tp_position, dtype=float), hp


def mu_obs(d_ucm, g: Gains) -> float:
    """Sigmoid damping: ``sigma_max`` near the wall, 0 far from it."""
    z = g.sigma_step * (float(np.linalg.norm(d_ucm)) - g.sigma_min)
    if z >= 0:
        ez = np.exp(-z)
        return g.sigma_max * ez / (1.0 + ez)
    return g.sigma_max / (1.0 + np.exp(z))


def ucm_interaction(d_ucm, hp: CurvePoint, tp: CurvePoint, d_rcm, O_r_in_e) -> np.ndarray:
    """Exact ``d(d_ucm)/dt`` per e-twist with the wall fixed in the world."""
    # world velocity (in e coordinates) of the foot point sliding on the tool
    foot_rate = point_velocity_matrix(tp.position) + rcm_foot_rate(d_rcm, tp, O_r_in_e)
    P_h = projection_rate_matrix(hp.k, hp.C, d_ucm, sign=+1.0)
    L = (P_h - np.eye(3)) @ foot_rate
    L[:, 3:] += skew(d_ucm)
    return L


def ucm_task(d_ucm, hp: CurvePoint, tp: CurvePoint, d_rcm, O_r_in_e, g: Gains) -> TaskSignal:
    """Clearance task: pushes ``d_ucm`` outward at rate ``mu_obs * lam``.

    Dormant (rate ~ 0, i.e. hold the current clearance) far from the wall.
    """
    L = ucm_interaction(d_ucm, hp, tp, d_rcm, O_r_in_e)
    rate = mu_obs(d_ucm, g) * g.lam * np.asarray(d_ucm, dtype=float)
    return TaskSignal(d_ucm, L, rate)
