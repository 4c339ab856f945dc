"""Discretized 3D curves: reference paths, tool bodies and orifice rims.

A curve is a polyline with arc length accumulated over its chords. Closed
curves (orifice rims) get an extra segment from the last point back to the
first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .geometry import Pose

MIN_SPACING = 1e-9


class CurveFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    position: np.ndarray
    s: float
    k: np.ndarray  # unit tangent
    C: np.ndarray  # curvature vector dk/ds, orthogonal to k
    segment_index: int


class Curve3D:
    """Immutable polyline with arc-length queries."""

    def __init__(self, points, closed: bool = False):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise CurveFormatError("a curve needs at least 2 points of 3 coordinates")
        if not np.all(np.isfinite(pts)):
            raise CurveFormatError("curve points must be finite")
        ends = np.roll(pts, -1, axis=0) if closed else pts[1:]
        seg = ends - pts[: len(ends)]
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len <= MIN_SPACING):
            raise CurveFormatError("consecutive curve points must be distinct")
        pts.setflags(write=False)
        self.points = pts
        self.closed = bool(closed)
        self._seg_start = pts[: len(ends)]
        self._seg_vec = seg
        self._seg_len = seg_len
        self._seg_dir = seg / seg_len[:, None]
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self._seg_s = cum  # arc length at each segment start, plus total
        self.cum_s = cum[: len(pts)]
        self.length = float(cum[-1])
        self.curvature_window = 2.0 * float(np.median(seg_len))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_segments(self) -> int:
        return len(self._seg_len)

    def transformed(self, pose: Pose) -> "Curve3D":
        """The same curve with every point mapped through ``pose``."""
        return Curve3D(pose.apply(self.points), closed=self.closed)

    # arc-length helpers

    def _wrap(self, s: float) -> float:
        if self.closed:
            return float(np.mod(s, self.length))
        return float(np.clip(s, 0.0, self.length))

    def point_at(self, s: float) -> np.ndarray:
        s = self._wrap(s)
        i = self._segment_of(s)
        u = (s - self._seg_s[i]) / self._seg_len[i]
        return self._seg_start[i] + u * self._seg_vec[i]

    def _segment_of(self, s: float) -> int:
        i = int(np.searchsorted(self._seg_s, s, side="right")) - 1
        return min(max(i, 0), self.n_segments - 1)

    def tangent_at(self, s: float) -> np.ndarray:
        """Unit tangent; vertices get the renormalized mean of both sides."""
        s = self._wrap(s)
        i = self._segment_of(s)
        tol = 1e-9 * max(1.0, self.length)
        j = None  # vertex index when s sits on one
        if abs(s - self._seg_s[i]) <= tol:
            j = i
        elif abs(s - self._seg_s[i + 1]) <= tol:
            j = i + 1
        if j is not None:
            m = self.n_segments
            if self.closed:
                k = self._seg_dir[(j - 1) % m] + self._seg_dir[j % m]
            elif 0 < j < m:
                k = self._seg_dir[j - 1] + self._seg_dir[j]
            else:
                return self._seg_dir[min(j, m - 1)].copy()
            n = np.linalg.norm(k)
            if n > 1e-12:
                return k / n
        return self._seg_dir[i].copy()

    def curvature_at(self, s: float) -> np.ndarray:
        """Central difference of tangents over ``curvature_window``."""
        h = 0.5 * self.curvature_window
        s = self._wrap(s)
        if self.closed:
            lo, hi = s - h, s + h
        else:
            lo, hi = max(s - h, 0.0), min(s + h, self.length)
        if hi - lo <= 0.0:
            return np.zeros(3)
        dk = (self.tangent_at(hi) - self.tangent_at(lo)) / (hi - lo)
        k = self.tangent_at(s)
        C = dk - (dk @ k) * k
        C[np.abs(C) < 1e-12] = 0.0
        return C

    def curve_point(self, s: float) -> CurvePoint:
        s = self._wrap(s)
        return CurvePoint(
            self.point_at(s), s, self.tangent_at(s), self.curvature_at(s), self._segment_of(s)
        )

    def project(self, q) -> CurvePoint:
        """Globally closest point of the polyline to ``q``.

        Ties go to the smallest arc length.
        """
        q = np.asarray(q, dtype=float).reshape(3)
        rel = q - self._seg_start
        u = np.einsum("ij,ij->i", rel, self._seg_vec) / self._seg_len**2
        u = np.clip(u, 0.0, 1.0)
        foot = self._seg_start + u[:, None] * self._seg_vec
        d2 = np.einsum("ij,ij->i", q - foot, q - foot)
        i = int(np.argmin(d2))
        s = float(self._seg_s[i] + u[i] * self._seg_len[i])
        if self.closed and s >= self.length:
            s = 0.0
        if 0.0 < u[i] < 1.0:
            k = self._seg_dir[i].copy()
        else:
            k = self.tangent_at(s)
        return CurvePoint(foot[i].copy(), s, k, self.curvature_at(s), i)

    def distance(self, q) -> float:
        return float(np.linalg.norm(np.asarray(q, dtype=float) - self.project(q).position))


def parse_curve(lines: Iterable[str]) -> Curve3D:
    """Build a curve from text lines (see :func:`load_curve`)."""
    points = []
    closed = False
    seen_data = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower() == "closed":
            if seen_data:
                raise CurveFormatError(f"line {lineno}: 'closed' must precede the points")
            closed = True
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise CurveFormatError(f"line {lineno}: expected 3 values, got {len(tokens)}")
        try:
            points.append([float(t) for t in tokens])
        except ValueError as exc:
            raise CurveFormatError(f"line {lineno}: {exc}") from None
        seen_data = True
    if len(points) < 2:
        raise CurveFormatError("fewer than 2 valid points")
    return Curve3D(points, closed=closed)


def load_curve(source: TextIO | str) -> Curve3D:
    """Read a curve file.

    One point per line as three whitespace-separated reals (mm); ``#`` starts
    a comment; an optional leading ``closed`` line marks a loop.
    """
    if isinstance(source, str):
        with open(source) as fh:
            return parse_curve(fh)
    return parse_curve(source)


def format_curve(curve: Curve3D, header: str = "") -> str:
    out = [f"# {line}" for line in header.splitlines()]
    if curve.closed:
        out.append("closed")
    out.extend(f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in curve.points)
    return "\n".join(out) + "\n"
