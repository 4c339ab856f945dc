"""Three-phase control unit: approach, transition through the orifice, inside."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .curve import Curve3D
from .geometry import DEFAULT_PINV_TOL, Pose, Twist, exp_so3
from .hierarchy import Limits, PriorityStack, saturate, solve_single, solve_two_level
from .plant import clearance
from .tasks import (
    Gains,
    SingularConfigurationError,
    approach_command,
    approach_error,
    mu_obs,
    pf_alpha,
    pf_beta,
    pf_error,
    pf_task,
    rcm_error,
    rcm_task,
    ucm_error,
    ucm_task,
)


class Phase(enum.IntEnum):
    OUTSIDE = 0
    TRANSITION = 1
    INSIDE = 2


class ConstraintMode(str, enum.Enum):
    NONE = "none"
    RCM = "rcm"
    UCM = "ucm"


class PriorityOrder(str, enum.Enum):
    CONSTRAINT_FIRST = "constraint-first"
    PATH_FIRST = "path-first"


class SupervisorError(RuntimeError):
    pass


def tip_pose_from_tool(tool: Curve3D) -> Pose:
    """Tip frame at the tool's last point, z axis along the final tangent."""
    k = tool.tangent_at(tool.length)
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(z, k)
    s, c = np.linalg.norm(axis), float(z @ k)
    if s < 1e-12:
        R = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        R = exp_so3(axis / s * np.arctan2(s, c))
    return Pose(R, tool.points[-1])


@dataclass(frozen=True)
class Scene:
    """Geometry of one session.

    ``tool`` lives in the e-frame; ``path`` and ``wall`` in the orifice frame
    r, whose z axis is the entry axis pointing into the cavity.
    """

    w_T_r: Pose
    w_T_e: Pose
    tool: Curve3D
    path: Curve3D
    wall: Curve3D | None = None
    approach_offset: float = 5.0
    e_T_t: Pose | None = None
    path_w: Curve3D = field(init=False, repr=False)
    wall_w: Curve3D | None = field(init=False, repr=False)

    def __post_init__(self):
        if self.approach_offset <= 0:
            raise ValueError("approach_offset must be positive")
        if self.e_T_t is None:
            object.__setattr__(self, "e_T_t", tip_pose_from_tool(self.tool))
        object.__setattr__(self, "path_w", self.path.transformed(self.w_T_r))
        wall_w = None if self.wall is None else self.wall.transformed(self.w_T_r)
        object.__setattr__(self, "wall_w", wall_w)

    def with_pose(self, w_T_e: Pose) -> "Scene":
        new = object.__new__(Scene)
        new.__dict__.update(self.__dict__)
        object.__setattr__(new, "w_T_e", w_T_e)
        return new

    @property
    def orifice_center(self) -> np.ndarray:
        return self.w_T_r.t

    @property
    def entry_axis(self) -> np.ndarray:
        return self.w_T_r.R[:, 2]

    @property
    def approach_target(self) -> Pose:
        return self.w_T_r @ Pose.from_translation([0.0, 0.0, -self.approach_offset])

    def tip_world(self) -> np.ndarray:
        return self.w_T_e.apply(self.e_T_t.t)


@dataclass(frozen=True)
class SupervisorConfig:
    approach_tol_t: float = 0.05  # mm
    approach_tol_r: float = 0.01  # rad
    s_handoff: float | None = None  # defaults to twice the scene's approach_offset
    pass_margin: float = 0.1  # mm past the orifice center along the entry axis
    limits: Limits = field(default_factory=Limits)
    pinv_tol: float = DEFAULT_PINV_TOL


@dataclass(frozen=True)
class SupervisorState:
    phase: Phase = Phase.OUTSIDE
    virtual_trocar: np.ndarray | None = None
    path_progress: float = 0.0
    constraint_mode: ConstraintMode = ConstraintMode.RCM
    priority_order: PriorityOrder = PriorityOrder.PATH_FIRST


LOG_COLUMNS = (
    ["step", "t", "phase"]
    + [f"T{i}{j}" for i in range(3) for j in range(4)]
    + ["vx", "vy", "vz", "wx", "wy", "wz"]
    + ["dpf_x", "dpf_y", "dpf_z", "drcm_x", "drcm_y", "drcm_z", "ducm_x", "ducm_y", "ducm_z"]
    + ["ducm_norm", "mu_obs", "alpha", "beta", "clearance", "s_p", "eapp_t", "eapp_r"]
)


@dataclass(frozen=True)
class LogRecord:
    step: int
    t: float
    phase: Phase
    pose: Pose
    twist: Twist
    d_pf: np.ndarray
    d_rcm: np.ndarray
    d_ucm: np.ndarray
    mu: float
    alpha: float
    beta: float
    clearance: float
    s_p: float
    e_app_t: float
    e_app_r: float

    def row(self) -> list:
        T = self.pose.matrix()[:3]
        return [
            self.step,
            self.t,
            self.phase.name.lower(),
            *T.reshape(12).tolist(),
            *self.twist.as_array().tolist(),
            *self.d_pf.tolist(),
            *self.d_rcm.tolist(),
            *self.d_ucm.tolist(),
            float(np.linalg.norm(self.d_ucm)),
            self.mu,
            self.alpha,
            self.beta,
            self.clearance,
            self.s_p,
            self.e_app_t,
            self.e_app_r,
        ]


NAN3 = np.full(3, np.nan)


def advance_virtual_trocar(state: SupervisorState, scene: Scene, cfg: SupervisorConfig) -> tuple[np.ndarray, float]:
    """Virtual trocar (world) and its interpolation parameter in [0, 1]."""
    s_handoff = cfg.s_handoff if cfg.s_handoff is not None else 2.0 * scene.approach_offset
    u = float(np.clip(state.path_progress / s_handoff, 0.0, 1.0))
    start = scene.path_w.points[0]
    return (1.0 - u) * start + u * scene.orifice_center, u


def _tip_passed_center(scene: Scene, margin: float) -> bool:
    axis = scene.entry_axis
    return float((scene.tip_world() - scene.orifice_center) @ axis) > margin


def step(
    state: SupervisorState,
    scene: Scene,
    g: Gains,
    cfg: SupervisorConfig | None = None,
    step_index: int = 0,
    t: float = 0.0,
) -> tuple[Twist, LogRecord, SupervisorState]:
    """One control period: returns the e-frame twist, a log record and the next state."""
    cfg = cfg or SupervisorConfig()
    try:
        return _step(state, scene, g, cfg, step_index, t)
    except (SingularConfigurationError, ValueError) as exc:
        raise SupervisorError(
            f"step {step_index} phase={state.phase.name} s_p={state.path_progress:.4f}: {exc}"
        ) from exc


def _step(state, scene, g, cfg, step_index, t):
    w_T_e = scene.w_T_e
    R = w_T_e.R
    e_app_t = e_app_r = np.nan

    if state.phase == Phase.OUTSIDE:
        r_T_t = scene.approach_target.inverse() @ w_T_e @ scene.e_T_t
        e_app, _ = approach_error(r_T_t)
        e_app_t = float(np.linalg.norm(e_app[:3]))
        e_app_r = float(np.linalg.norm(e_app[3:]))
        if e_app_t < cfg.approach_tol_t and e_app_r < cfg.approach_tol_r:
            state = replace(state, phase=Phase.TRANSITION, priority_order=PriorityOrder.PATH_FIRST)
        else:
            _, twist = approach_command(r_T_t, g, scene.e_T_t)
            twist = saturate(twist, cfg.limits)
            rec = _record(state, scene, g, twist, step_index, t, None, e_app_t, e_app_r)
            return twist, rec, state

    tip_w = scene.tip_world()
    d_pf_w, cp = pf_error(tip_w, scene.path_w)
    progress = max(state.path_progress, cp.s)
    state = replace(state, path_progress=progress)
    beta = pf_beta(d_pf_w, cp, g)
    v_ret = beta * d_pf_w
    alpha = pf_alpha(v_ret, g)
    v_t_w = alpha * cp.k + v_ret
    pf = pf_task(scene.e_T_t.t, R.T @ v_t_w, R.T @ d_pf_w)

    if state.phase == Phase.TRANSITION:
        trocar, u = advance_virtual_trocar(state, scene, cfg)
        state = replace(state, virtual_trocar=trocar)
        if u >= 1.0 and _tip_passed_center(scene, cfg.pass_margin):
            order = (
                PriorityOrder.CONSTRAINT_FIRST
                if state.constraint_mode == ConstraintMode.RCM
                else PriorityOrder.PATH_FIRST
            )
            state = replace(state, phase=Phase.INSIDE, virtual_trocar=scene.orifice_center.copy(), priority_order=order)

    if state.constraint_mode == ConstraintMode.NONE:
        twist = solve_single(pf, cfg.pinv_tol, cfg.limits)
        extras = dict(d_pf=d_pf_w, alpha=alpha, beta=beta)
        return twist, _record(state, scene, g, twist, step_index, t, extras, e_app_t, e_app_r), state

    trocar_w = state.virtual_trocar if state.phase == Phase.TRANSITION else scene.orifice_center
    O_e = w_T_e.inverse().apply(trocar_w)
    d_rcm, tp = rcm_error(scene.tool, O_e)
    mu = np.nan
    d_ucm_w = NAN3

    if state.phase == Phase.TRANSITION:
        rcm = rcm_task(d_rcm, tp, O_e, g)
        stack = PriorityStack(pf, rcm)
    elif state.constraint_mode == ConstraintMode.RCM:
        rcm = rcm_task(d_rcm, tp, O_e, g)
        stack = PriorityStack(rcm, pf)
    else:
        stack, d_ucm_w, mu = _ucm_stack(scene, pf, d_rcm, tp, O_e, g)

    twist = solve_two_level(stack, cfg.pinv_tol, cfg.limits)
    if np.isnan(d_ucm_w[0]) and scene.wall_w is not None:
        d_ucm_w, mu = _ucm_measure(scene, tp, g)
    extras = dict(d_pf=d_pf_w, d_rcm=R @ d_rcm, d_ucm=d_ucm_w, mu=mu, alpha=alpha, beta=beta)
    return twist, _record(state, scene, g, twist, step_index, t, extras, e_app_t, e_app_r), state


def _ucm_measure(scene, tp, g):
    tp_w = scene.w_T_e.apply(tp.position)
    d_ucm_w, _ = ucm_error(tp_w, scene.wall_w)
    return d_ucm_w, mu_obs(d_ucm_w, g)


def _ucm_stack(scene, pf, d_rcm, tp, O_e, g):
    if scene.wall_w is None:
        raise ValueError("UCM mode needs a wall curve")
    R = scene.w_T_e.R
    tp_w = scene.w_T_e.apply(tp.position)
    d_ucm_w, hp_w = ucm_error(tp_w, scene.wall_w)
    # wall foot re-expressed in e; k and C only rotate
    hp_e = replace(
        hp_w,
        position=scene.w_T_e.inverse().apply(hp_w.position),
        k=R.T @ hp_w.k,
        C=R.T @ hp_w.C,
    )
    ucm = ucm_task(R.T @ d_ucm_w, hp_e, tp, d_rcm, O_e, g)
    return PriorityStack(pf, ucm), d_ucm_w, mu_obs(d_ucm_w, g)


def _record(state, scene, g, twist, step_index, t, extras, e_app_t, e_app_r) -> LogRecord:
    extras = extras or {}
    clr = np.nan
    if scene.wall_w is not None:
        clr = clearance(scene.tool.transformed(scene.w_T_e), scene.wall_w)
    return LogRecord(
        step=step_index,
        t=t,
        phase=state.phase,
        pose=scene.w_T_e,
        twist=twist,
        d_pf=extras.get("d_pf", NAN3),
        d_rcm=extras.get("d_rcm", NAN3),
        d_ucm=extras.get("d_ucm", NAN3),
        mu=float(extras.get("mu", np.nan)),
        alpha=float(extras.get("alpha", np.nan)),
        beta=float(extras.get("beta", np.nan)),
        clearance=clr,
        s_p=state.path_progress,
        e_app_t=e_app_t,
        e_app_r=e_app_r,
    )


def initial_state(mode: ConstraintMode, phase: Phase = Phase.OUTSIDE) -> SupervisorState:
    order = PriorityOrder.PATH_FIRST
    if phase == Phase.INSIDE and mode == ConstraintMode.RCM:
        order = PriorityOrder.CONSTRAINT_FIRST
    return SupervisorState(phase=phase, constraint_mode=mode, priority_order=order)


__all__ = [
    "ConstraintMode",
    "LOG_COLUMNS",
    "LogRecord",
    "Phase",
    "PriorityOrder",
    "Scene",
    "SupervisorConfig",
    "SupervisorError",
    "SupervisorState",
    "advance_virtual_trocar",
    "initial_state",
    "step",
    "tip_pose_from_tool",
]
