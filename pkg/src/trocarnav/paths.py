"""Analytic generators for reference paths, tools and orifice rims.

All paths are expressed in the orifice frame: z is the entry axis pointing
into the cavity and the orifice center is the origin.
"""

from __future__ import annotations

import numpy as np

from .curve import Curve3D, format_curve


def _resample(f, u_max: float, spacing: float, closed: bool = False, n_dense: int = 200_000) -> np.ndarray:
    """Sample the parametric curve ``f(u)``, ``u`` in [0, u_max], at equal arc length."""
    u = np.linspace(0.0, u_max, n_dense)
    p = f(u)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
    total = s[-1]
    n = max(int(np.ceil(total / spacing - 1e-9)), 3 if closed else 1)
    targets = np.linspace(0.0, total, n + 1)
    if closed:
        targets = targets[:-1]
    u_t = np.interp(targets, s, u)
    return f(u_t)


def _check_positive(**params):
    for name, value in params.items():
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")


def line(length: float = 10.0, spacing: float = 0.1, start=(0.0, 0.0, 0.0), direction=(0.0, 0.0, 1.0)) -> Curve3D:
    _check_positive(length=length, spacing=spacing)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    n = int(round(length / spacing))
    s = np.linspace(0.0, length, n + 1)
    return Curve3D(np.asarray(start, dtype=float) + s[:, None] * d)


def circle(radius: float = 10.0, spacing: float = 0.1, z: float = 0.0) -> Curve3D:
    """Closed CCW circle in the plane ``z``, starting at ``(radius, 0, z)``."""
    _check_positive(radius=radius, spacing=spacing)
    n = max(int(round(2 * np.pi * radius / spacing)), 3)
    a = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([radius * np.cos(a), radius * np.sin(a), np.full(n, z)])
    return Curve3D(pts, closed=True)


def spiral(radius: float = 2.0, pitch: float = 1.0, turns: float = 3.0, spacing: float = 0.05, z0: float = 0.0) -> Curve3D:
    """Helix about the z axis starting at ``(radius, 0, z0)``."""
    _check_positive(radius=radius, pitch=pitch, turns=turns, spacing=spacing)

    def f(u):
        return np.column_stack([radius * np.cos(u), radius * np.sin(u), z0 + pitch * u / (2 * np.pi)])

    return Curve3D(_resample(f, 2 * np.pi * turns, spacing))


def drill(
    offset: float = 5.0,
    depth: float = 15.0,
    radius: float = 3.0,
    pitch: float = 4.0,
    turns: float = 2.0,
    spacing: float = 0.05,
) -> Curve3D:
    """Straight entry from ``-offset`` to ``depth`` on the axis, then a widening spiral.

    The spiral radius grows quadratically with the turning angle, so it
    leaves the axis tangentially (a conical tunnel).
    """
    _check_positive(offset=offset, depth=depth, radius=radius, pitch=pitch, turns=turns, spacing=spacing)
    phi_max = 2 * np.pi * turns
    lin = depth + offset

    def f(u):
        u = np.atleast_1d(u)
        phi = np.clip(u - lin, 0.0, None)
        r = radius * (phi / phi_max) ** 2
        z = np.where(u <= lin, u - offset, depth + pitch * phi / (2 * np.pi))
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])

    # the linear piece is arc-length parameterized; sample pieces separately
    n_lin = int(round(lin / spacing))
    straight = f(np.linspace(0.0, lin, n_lin + 1))
    tail = _resample(lambda v: f(lin + v), phi_max, spacing)
    return Curve3D(np.vstack([straight, tail[1:]]))


def mastoid(
    offset: float = 5.0,
    depth: float = 12.0,
    radius: float = 3.0,
    pitch: float = 4.0,
    turns: float = 1.5,
    lateral: float = 2.0,
    spacing: float = 0.05,
) -> Curve3D:
    """Entry line, a lateral S-bend of size ``lateral`` and a helix around the shifted axis.

    The helix axis sits ``lateral`` mm off the entry axis, so the tool body
    has to swing toward the orifice rim to follow it.
    """
    _check_positive(offset=offset, depth=depth, radius=radius, pitch=pitch, turns=turns, spacing=spacing)
    bend = 4.0  # mm of depth used by the S-bend
    lin = depth + offset
    phi_max = 2 * np.pi * turns

    def f(u):
        u = np.atleast_1d(u)
        z = np.minimum(u, lin + bend) - offset
        w = np.clip((u - lin) / bend, 0.0, 1.0)
        x = lateral * (3 * w**2 - 2 * w**3)
        phi = np.clip(u - lin - bend, 0.0, None)
        grow = np.clip(phi / (0.5 * np.pi), 0.0, 1.0)
        r = radius * (3 * grow**2 - 2 * grow**3)
        x = x + r * np.sin(phi)
        y = r * (1 - np.cos(phi))
        z = z + pitch * phi / (2 * np.pi)
        return np.column_stack([x, y, z])

    n_lin = int(round(lin / spacing))
    straight = f(np.linspace(0.0, lin, n_lin + 1))
    tail = _resample(lambda v: f(lin + v), bend + phi_max, spacing)
    return Curve3D(np.vstack([straight, tail[1:]]))


def straight_tool(length: float = 40.0) -> Curve3D:
    """Tool shaft from the e-frame origin along +z; the tip is the last point."""
    _check_positive(length=length)
    return Curve3D([[0.0, 0.0, 0.0], [0.0, 0.0, length]])


def curved_tool(shaft: float = 30.0, bend_radius: float = 20.0, bend_angle: float = np.deg2rad(20), spacing: float = 0.25) -> Curve3D:
    """Straight shaft along +z followed by a circular arc bending toward +x."""
    _check_positive(shaft=shaft, bend_radius=bend_radius, bend_angle=bend_angle, spacing=spacing)
    n = max(int(np.ceil(bend_radius * bend_angle / spacing)), 2)
    a = np.linspace(0.0, bend_angle, n + 1)[1:]
    arc = np.column_stack([bend_radius * (1 - np.cos(a)), np.zeros_like(a), shaft + bend_radius * np.sin(a)])
    return Curve3D(np.vstack([[0.0, 0.0, 0.0], [0.0, 0.0, shaft], arc]))


GENERATORS = {
    "line": line,
    "circle": circle,
    "spiral": spiral,
    "drill": drill,
    "mastoid": mastoid,
}


def gen_reference_path(kind: str, **params) -> tuple[Curve3D, str]:
    """Build a path and the header text documenting how it was generated."""
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown path kind {kind!r}; choose from {sorted(GENERATORS)}") from None
    curve = gen(**params)
    args = ", ".join(f"{k}={v}" for k, v in sorted(params.items()))
    header = f"generator: {kind}({args})\npoints: {len(curve)}  length: {curve.length:.6f} mm"
    return curve, header


def write_reference_path(kind: str, out, **params) -> Curve3D:
    curve, header = gen_reference_path(kind, **params)
    text = format_curve(curve, header)
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
    return curve
