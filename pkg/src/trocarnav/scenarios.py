"""Scenario runner, CSV logging, summaries and gain sweeps."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import paths
from .curve import Curve3D, load_curve
from .geometry import Pose, exp_so3
from .plant import Plant
from .supervisor import (
    LOG_COLUMNS,
    ConstraintMode,
    LogRecord,
    Phase,
    Scene,
    SupervisorConfig,
    SupervisorError,
    initial_state,
    step,
    tip_pose_from_tool,
)
from .tasks import Gains

SCENARIOS = ("pf-only", "rcm-drill", "ucm-mastoid")
CHANNELS = ("d_pf", "d_rcm", "d_ucm")
SETTLE_FRACTION = 0.05

# orifice frame in the world: a generic pose so no axis is special
DEFAULT_W_T_R = Pose(exp_so3([0.2, -0.1, 0.3]), [10.0, 20.0, 30.0])
# approach start, relative to the approach target
DEFAULT_START = Pose(exp_so3([0.15, -0.1, 0.05]), [3.0, -2.0, -8.0])

SCENARIO_GAINS = {
    "pf-only": Gains(),
    "rcm-drill": Gains(),
    "ucm-mastoid": Gains(lam=0.8, gamma=0.8),
}


class ScenarioAborted(RuntimeError):
    """The control loop hit a singular configuration; ``summary`` covers the partial log."""

    def __init__(self, msg: str, summary: "RunSummary"):
        super().__init__(msg)
        self.summary = summary


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "rcm-drill"
    gains: Gains | None = None  # None: the scenario's default gains
    tool_file: str | None = None
    path_file: str | None = None
    wall_file: str | None = None
    max_steps: int = 1_000_000
    stop_fraction: float = 0.995
    duration: float | None = None  # seconds of simulated time
    seed: int = 0
    noise: tuple[float, float] = (0.0, 0.0)  # reported-pose noise (mm, rad)
    output: str | None = None  # CSV path
    transport: str = "in-process"  # or "loopback" or "host:port"
    s_handoff: float | None = None
    d0: float = 0.5  # pf-only: initial lateral tip offset (mm)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 < self.stop_fraction <= 1:
            raise ValueError("stop_fraction must be in (0, 1]")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def resolved_gains(self) -> Gains:
        return self.gains if self.gains is not None else SCENARIO_GAINS[self.scenario]


@dataclass
class RunSummary:
    scenario: str
    steps: int
    wall_clock: float
    completed: bool
    path_progress: float
    path_length: float
    # stats[phase][channel] = {mean, std, median, max, n}
    stats: dict = field(default_factory=dict)
    ducm_min: float = float("nan")
    clearance_min: float = float("nan")
    phases: list = field(default_factory=list)  # phase names in order of appearance

    def get(self, phase: str, channel: str, stat: str) -> float:
        return self.stats.get(phase, {}).get(channel, {}).get(stat, float("nan"))

    def to_dict(self) -> dict:
        return asdict(self)


# scene construction


def _load(path: str | None, default) -> Curve3D | None:
    return load_curve(path) if path else default()


def build_scene(cfg: RunConfig) -> tuple[Scene, ConstraintMode, Phase]:
    """Scene with the initial e-frame pose, the constraint mode and the starting phase."""
    sc = cfg.scenario
    if sc == "pf-only":
        tool = _load(cfg.tool_file, paths.straight_tool)
        path = _load(cfg.path_file, paths.spiral)
        wall = _load(cfg.wall_file, lambda: None)
        e_T_t = tip_pose_from_tool(tool)
        # tip on the path start, offset along the path normal, tool along the tangent
        cp = path.curve_point(0.0)
        n = cp.C if np.linalg.norm(cp.C) > 1e-9 else np.cross(cp.k, [1.0, 0.0, 0.0])
        n = n - (n @ cp.k) * cp.k
        n /= np.linalg.norm(n)
        z = cp.k
        x = n
        r_T_t = Pose(np.column_stack([x, np.cross(z, x), z]), cp.position + cfg.d0 * n)
        w_T_e = DEFAULT_W_T_R @ r_T_t @ e_T_t.inverse()
        scene = Scene(DEFAULT_W_T_R, w_T_e, tool, path, wall, e_T_t=e_T_t)
        return scene, ConstraintMode.NONE, Phase.INSIDE

    if sc == "rcm-drill":
        tool = _load(cfg.tool_file, paths.straight_tool)
        path = _load(cfg.path_file, paths.drill)
        wall = _load(cfg.wall_file, lambda: paths.circle(4.0, 0.05))
        mode = ConstraintMode.RCM
    else:
        tool = _load(cfg.tool_file, paths.curved_tool)
        path = _load(cfg.path_file, paths.mastoid)
        wall = _load(cfg.wall_file, lambda: paths.circle(1.0, 0.05))
        mode = ConstraintMode.UCM
    scene = Scene(DEFAULT_W_T_R, Pose(), tool, path, wall)
    w_T_e = scene.approach_target @ DEFAULT_START @ scene.e_T_t.inverse()
    return scene.with_pose(w_T_e), mode, Phase.OUTSIDE


# CSV


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def format_rows(records: list[LogRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in records:
        w.writerow([_fmt(x) for x in r.row()])
    return buf.getvalue()


def write_csv(records: list[LogRecord], out, cfg: RunConfig | None = None):
    """Write the log; the first line is a timestamp comment, the rest is deterministic."""
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    label = cfg.scenario if cfg else "run"
    text = f"# trocarnav {label} {stamp}\n" + format_rows(records)
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def read_csv(source) -> list[dict]:
    """Rows of a log written by ``write_csv`` as dicts of strings."""
    fh = open(source, newline="") if isinstance(source, str) else source
    try:
        lines = [ln for ln in fh if not ln.startswith("#")]
    finally:
        if isinstance(source, str):
            fh.close()
    return list(csv.DictReader(lines))


# summaries


def _stats(x: np.ndarray) -> dict:
    x = x[np.isfinite(x)]
    if x.size == 0:
        return dict(mean=float("nan"), std=float("nan"), median=float("nan"), max=float("nan"), n=0)
    return dict(
        mean=float(np.mean(x)),
        std=float(np.std(x)),
        median=float(np.median(x)),
        max=float(np.max(x)),
        n=int(x.size),
    )


def summarize_arrays(phase: np.ndarray, norms: dict, clearance: np.ndarray) -> dict:
    """Per-phase stats of the channel norms. ``phase`` holds lowercase phase names."""
    out = {}
    for name in [p.name.lower() for p in Phase]:
        m = phase == name
        if m.any():
            out[name] = {ch: _stats(norms[ch][m]) for ch in CHANNELS}
    return out


def _nanmin(x: np.ndarray) -> float:
    x = x[np.isfinite(x)]
    return float(x.min()) if x.size else float("nan")


def summarize_records(records: list[LogRecord], scenario: str, wall_clock: float, completed: bool, path_length: float) -> RunSummary:
    phase = np.array([r.phase.name.lower() for r in records])
    norms = {ch: np.array([np.linalg.norm(getattr(r, ch)) for r in records]) for ch in CHANNELS}
    clr = np.array([r.clearance for r in records])
    seen = list(dict.fromkeys(phase.tolist()))
    return RunSummary(
        scenario=scenario,
        steps=len(records),
        wall_clock=wall_clock,
        completed=completed,
        path_progress=records[-1].s_p if records else 0.0,
        path_length=path_length,
        stats=summarize_arrays(phase, norms, clr),
        ducm_min=_nanmin(norms["d_ucm"]),
        clearance_min=_nanmin(clr),
        phases=seen,
    )


def summarize_csv(source, scenario: str = "") -> RunSummary:
    """Recompute the summary statistics from a written log."""
    rows = read_csv(source)
    phase = np.array([r["phase"] for r in rows])

    def norm(prefix):
        a = np.array([[float(r[f"{prefix}_{c}"]) for c in "xyz"] for r in rows])
        return np.linalg.norm(a, axis=1) if len(a) else np.zeros(0)

    norms = {"d_pf": norm("dpf"), "d_rcm": norm("drcm"), "d_ucm": norm("ducm")}
    clr = np.array([float(r["clearance"]) for r in rows])
    return RunSummary(
        scenario=scenario,
        steps=len(rows),
        wall_clock=float("nan"),
        completed=False,
        path_progress=float(rows[-1]["s_p"]) if rows else 0.0,
        path_length=float("nan"),
        stats=summarize_arrays(phase, norms, clr),
        ducm_min=_nanmin(norms["d_ucm"]),
        clearance_min=_nanmin(clr),
        phases=list(dict.fromkeys(phase.tolist())),
    )


# control loop


def _loop(link, scene: Scene, g: Gains, scfg: SupervisorConfig, state, cfg: RunConfig):
    records = []
    stop_s = cfg.stop_fraction * scene.path_w.length
    completed = False
    try:
        for k in range(cfg.max_steps):
            scene = scene.with_pose(link.measured_pose())
            t = k * g.T_e
            twist, rec, state = step(state, scene, g, scfg, k, t)
            records.append(rec)
            if state.phase == Phase.INSIDE and state.path_progress >= stop_s:
                completed = True
                break
            if cfg.duration is not None and t >= cfg.duration:
                break
            link.step(twist)
    except SupervisorError as exc:
        return records, False, exc
    return records, completed, None


def _make_plant(scene: Scene, g: Gains, cfg: RunConfig) -> Plant:
    return Plant(scene.w_T_e, g.T_e, cfg.noise, cfg.seed)


def simulate(cfg: RunConfig) -> tuple[list[LogRecord], RunSummary]:
    """Run the scenario and return the records with their summary.

    Raises ScenarioAborted (after writing the partial log) on a singular configuration.
    """
    from . import netlink

    g = cfg.resolved_gains
    scene, mode, phase = build_scene(cfg)
    scfg = SupervisorConfig(s_handoff=cfg.s_handoff)
    state = initial_state(mode, phase)
    plant = _make_plant(scene, g, cfg)
    t0 = time.perf_counter()
    if cfg.transport == "in-process":
        records, completed, err = _loop(plant, scene, g, scfg, state, cfg)
    else:
        server = None
        if cfg.transport == "loopback":
            bound, ready = [], threading.Event()
            server = threading.Thread(
                target=netlink.serve_plant,
                args=(("127.0.0.1", 0), plant, scene.w_T_r),
                kwargs=dict(max_sessions=1, ready=ready, bound=bound),
                daemon=True,
            )
            server.start()
            ready.wait(5.0)
            endpoint = bound[0]
        else:
            endpoint = cfg.transport
        with netlink.RemotePlant(endpoint, g.T_e) as link:
            records, completed, err = _loop(link, scene, g, scfg, state, cfg)
        if server is not None:
            server.join(10.0)
    summary = summarize_records(records, cfg.scenario, time.perf_counter() - t0, completed, scene.path_w.length)
    if cfg.output:
        write_csv(records, cfg.output, cfg)
    if err is not None:
        raise ScenarioAborted(str(err), summary) from err
    return records, summary


def run_scenario(cfg: RunConfig) -> RunSummary:
    return simulate(cfg)[1]


# gain sweep


def sweep_metrics(records: list[LogRecord], T_e: float, settle_fraction: float = SETTLE_FRACTION, ref_dirs=None) -> dict:
    """Steady-state error, overshoot count and settle time of a pf-only run.

    Settled means ``||d_pf||`` first drops below ``settle_fraction`` of its
    initial value. Overshoots are sign changes, after settling, of the
    component of ``d_pf`` along ``ref_dirs`` (one unit vector per record,
    default the initial error direction); a crossing only counts once the
    component leaves a band of ``settle_fraction * ||d0||`` on the other side. Steady state is the mean ``||d_pf||`` over the last
    half of the run.
    """
    d = np.array([r.d_pf for r in records])
    nrm = np.linalg.norm(d, axis=1)
    d0 = nrm[0]
    out = dict(d0=float(d0), steps=len(records))
    ss = float(np.mean(nrm[len(nrm) // 2 :]))
    out["steady_state"] = ss
    below = np.nonzero(nrm < settle_fraction * d0)[0]
    if d0 == 0 or below.size == 0:
        out.update(settle_time=float("nan"), overshoots=0)
        return out
    k_s = int(below[0])
    out["settle_time"] = k_s * T_e
    u = np.tile(d[0] / d0, (len(d), 1)) if ref_dirs is None else np.asarray(ref_dirs, dtype=float)
    comp = np.einsum("ij,ij->i", d[k_s:], u[k_s:])
    band = settle_fraction * d0
    count, side = 0, 1.0
    for c in comp:
        if side > 0 and c < -band:
            count, side = count + 1, -1.0
        elif side < 0 and c > band:
            count, side = count + 1, 1.0
    out["overshoots"] = count
    return out


def path_normals(records: list[LogRecord], scene: Scene) -> np.ndarray:
    """Unit principal normal of the path at each record's tip projection.

    Oriented to agree with the initial error; falls back to that error's
    direction where the path is straight.
    """
    d0 = records[0].d_pf / max(float(np.linalg.norm(records[0].d_pf)), 1e-300)
    C = np.array([scene.path_w.project(r.pose.apply(scene.e_T_t.t)).C for r in records])
    c = np.linalg.norm(C, axis=1)
    sign = -1.0 if C[0] @ d0 < 0 else 1.0
    bent = c > 1e-9
    out = np.tile(d0, (len(records), 1))
    out[bent] = sign * C[bent] / c[bent, None]
    return out


def _sweep_cell(args):
    base, bp, gc = args
    g = replace(base.resolved_gains, beta_prime=bp, gamma_c=gc)
    cfg = replace(base, gains=g, output=None, transport="in-process")
    records, summary = simulate(cfg)
    row = dict(beta_prime=bp, gamma_c=gc, v_tis=g.v_tis, ratio=bp / g.v_tis)
    row.update(sweep_metrics(records, g.T_e, ref_dirs=path_normals(records, build_scene(cfg)[0])))
    row["inside_mean"] = summary.get("inside", "d_pf", "mean")
    return row


def gain_sweep(base: RunConfig, beta_primes, gamma_cs=None, workers: int = 1) -> list[dict]:
    """One pf-only run per (beta_prime, gamma_c) cell."""
    if base.scenario != "pf-only":
        raise ValueError("gain sweeps run on the pf-only scenario")
    gamma_cs = list(gamma_cs) if gamma_cs else [base.resolved_gains.gamma_c]
    cells = [(base, float(bp), float(gc)) for gc in gamma_cs for bp in beta_primes]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


SWEEP_COLUMNS = ["beta_prime", "gamma_c", "v_tis", "ratio", "d0", "steps", "steady_state", "settle_time", "overshoots", "inside_mean"]


def write_sweep(rows: list[dict], out):
    buf = io.StringIO()
    buf.write(f"# settle: ||d_pf|| < {SETTLE_FRACTION} * ||d_pf(0)||; overshoot: band-crossings of d_pf along the local path normal after settle\n")
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    if hasattr(out, "write"):
        out.write(buf.getvalue())
    else:
        with open(out, "w", newline="") as fh:
            fh.write(buf.getvalue())
