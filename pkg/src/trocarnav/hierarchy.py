"""Two-level task-priority solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DEFAULT_PINV_TOL, Twist, pseudo_inverse
from .tasks import TaskSignal


@dataclass(frozen=True)
class PriorityStack:
    primary: TaskSignal
    secondary: TaskSignal | None = None


@dataclass(frozen=True)
class Limits:
    v_max: float = 20.0  # mm/s
    w_max: float = 1.0  # rad/s


def saturate(tw: Twist, limits: Limits | None) -> Twist:
    """Scale the whole twist down so both parts respect the limits."""
    if limits is None:
        return tw
    scale = 1.0
    nv, nw = np.linalg.norm(tw.v), np.linalg.norm(tw.w)
    if nv > limits.v_max:
        scale = min(scale, limits.v_max / nv)
    if nw > limits.w_max:
        scale = min(scale, limits.w_max / nw)
    if scale == 1.0:
        return tw
    return Twist(tw.v * scale, tw.w * scale)


def _norm2(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def solve_single(
    t: TaskSignal, tol: float = DEFAULT_PINV_TOL, limits: Limits | None = None
) -> Twist:
    """Minimum-norm least-squares twist for one task."""
    return saturate(Twist.from_array(pseudo_inverse(t.L, tol) @ t.desired_rate), limits)


def _primary_split(L1: np.ndarray, r1, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm primary solution and an orthonormal basis N of null(L1).

    ``N @ N.T`` is the null-space projector ``I - pinv(L1) @ L1``; keeping
    the basis instead of the projector keeps ``L1 @ N`` at round-off level
    even when the secondary correction is large.
    """
    L1 = np.atleast_2d(np.asarray(L1, dtype=float))
    _, S, Vt = np.linalg.svd(L1, full_matrices=True)
    # same rank rule as pseudo_inverse
    r = int(np.count_nonzero(S > tol * S[0])) if np.any(L1) else 0
    return pseudo_inverse(L1, tol) @ r1, Vt[r:].T


def solve_two_level_array(s: PriorityStack, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Primary exactly (least squares), secondary as well as possible in its null space.

    ``x = x1 + pinv(L2 P)(r2 - L2 x1)``, evaluated as ``N pinv(L2 N)`` which is
    the same matrix for ``P = N N^T``.
    """
    x1, N = _primary_split(s.primary.L, s.primary.desired_rate, tol)
    if s.secondary is None or N.shape[1] == 0:
        return x1
    L2, r2 = s.secondary.L, s.secondary.desired_rate
    return x1 + N @ (pseudo_inverse(L2 @ N, tol, _norm2(L2)) @ (r2 - L2 @ x1))


def solve_two_level_projected(s: PriorityStack, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Same solution written with the explicit primary null-space projector."""
    L1, r1 = s.primary.L, s.primary.desired_rate
    L1_pinv = pseudo_inverse(L1, tol)
    x1 = L1_pinv @ r1
    if s.secondary is None:
        return x1
    P1 = np.eye(6) - L1_pinv @ L1
    L2, r2 = s.secondary.L, s.secondary.desired_rate
    L2_tilde = L2 @ P1
    return x1 + P1 @ pseudo_inverse(L2_tilde, tol, _norm2(L2)) @ (r2 - L2 @ x1)


def solve_two_level(
    s: PriorityStack, tol: float = DEFAULT_PINV_TOL, limits: Limits | None = None
) -> Twist:
    """End-effector twist meeting the primary task, then the secondary in its null space."""
    return saturate(Twist.from_array(solve_two_level_array(s, tol)), limits)
