"""Small rigid-body and linear-algebra primitives.

Vectors are plain ``numpy`` arrays of shape ``(3,)``; rotations are 3x3
matrices. Lengths are millimetres, angles radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-6
DEFAULT_PINV_TOL = 1e-6


def vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_so3(phi) -> np.ndarray:
    """Rodrigues exponential of a rotation vector."""
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < 1e-12:
        return np.eye(3) + K + 0.5 * K @ K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def _left_jacobian_so3(phi: np.ndarray) -> np.ndarray:
    # integral of exp(skew(phi)*s) for s in [0, 1]
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < 1e-8:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    a = (1.0 - np.cos(theta)) / theta**2
    b = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + a * K + b * K @ K


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Closest rotation in the Frobenius sense (polar decomposition)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.linalg.norm(R.T @ R - np.eye(3)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True)
class AngleAxis:
    theta: float
    u: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    @property
    def vector(self) -> np.ndarray:
        return self.theta * self.u

    def to_matrix(self) -> np.ndarray:
        return exp_so3(self.vector)


def rotation_to_angle_axis(R) -> AngleAxis:
    """Angle/axis of a rotation matrix, theta in [0, pi].

    Raises:
        ValueError: if ``R`` is not a proper rotation.
    """
    R = np.asarray(R, dtype=float)
    if not is_rotation(R):
        raise ValueError("matrix is not a proper rotation")
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    # 2 sin(theta) u; atan2 keeps theta consistent with w near the identity
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    theta = float(np.arctan2(0.5 * np.linalg.norm(w), cos_t))
    if theta < 1e-10:
        return AngleAxis(0.0, np.array([0.0, 0.0, 1.0]))
    if theta < np.pi - 1e-3:
        return AngleAxis(theta, w / np.linalg.norm(w))
    # near pi: sin(theta) is tiny, read the axis from the symmetric part
    S = 0.5 * (R + R.T) - cos_t * np.eye(3)
    S /= 1.0 - cos_t
    i = int(np.argmax(np.diag(S)))
    u = S[:, i] / np.sqrt(S[i, i])
    if u @ w < 0:
        u = -u
    return AngleAxis(theta, u / np.linalg.norm(u))


def l_theta_u(a: AngleAxis) -> np.ndarray:
    """Interaction matrix of the theta-u rotation feature.

    ``d(theta*u)/dt = l_theta_u(a) @ omega`` for ``dR/dt = skew(omega) @ R``,
    i.e. ``omega`` in the parent frame. For the angular velocity expressed in
    the rotated frame itself use ``l_theta_u(a) @ R``, which equals the
    transpose.
    """
    theta = float(a.theta)
    if theta >= np.pi:
        raise ValueError("theta-u parameterization is singular at theta = pi")
    if theta < 1e-12:
        return np.eye(3)
    U = skew(a.u)
    sinc = lambda x: np.sinc(x / np.pi)  # noqa: E731
    return (
        np.eye(3)
        - 0.5 * theta * U
        + (1.0 - sinc(theta) / sinc(0.5 * theta) ** 2) * U @ U
    )


@dataclass(frozen=True)
class Pose:
    """Pose of a child frame in a parent frame: ``p_parent = R @ p_child + t``."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "t", vec3(self.t))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), t)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def apply(self, p) -> np.ndarray:
        """Map points (shape ``(3,)`` or ``(n, 3)``) from child to parent."""
        p = np.asarray(p, dtype=float)
        return p @ self.R.T + self.t

    def to_list(self) -> list[float]:
        """Row-major R followed by t (12 values)."""
        return [*self.R.reshape(9).tolist(), *self.t.tolist()]

    @classmethod
    def from_list(cls, values) -> "Pose":
        values = np.asarray(values, dtype=float).reshape(12)
        return cls(values[:9].reshape(3, 3), values[9:])


@dataclass(frozen=True)
class Twist:
    """Linear velocity ``v`` (mm/s) and angular velocity ``w`` (rad/s)."""

    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "v", vec3(self.v))
        object.__setattr__(self, "w", vec3(self.w))

    @classmethod
    def from_array(cls, x) -> "Twist":
        x = np.asarray(x, dtype=float).reshape(6)
        return cls(x[:3], x[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.w])

    def __neg__(self) -> "Twist":
        return Twist(-self.v, -self.w)


def twist_transform(e_T_t: Pose) -> np.ndarray:
    """6x6 matrix taking a twist of frame t (in t) to frame e (in e).

    The linear part of the result is the velocity of the e-frame origin,
    assuming both frames belong to the same rigid body.
    """
    R, t = e_T_t.R, e_T_t.t
    V = np.zeros((6, 6))
    V[:3, :3] = R
    V[:3, 3:] = skew(t) @ R
    V[3:, 3:] = R
    return V


def pseudo_inverse(M, tol: float = DEFAULT_PINV_TOL, scale: float | None = None) -> np.ndarray:
    """Moore-Penrose inverse with singular values below ``tol * scale`` dropped.

    ``scale`` defaults to the largest singular value of ``M``. A projected
    matrix should pass the scale of the unprojected one so that numerical
    residue of an exhausted task is not inverted.
    """
    M = np.asarray(M, dtype=float)
    if not np.any(M):
        return np.zeros(M.T.shape)
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    ref = S[0] if scale is None else max(scale, S[0])
    keep = S > tol * ref
    return (Vt[keep].T / S[keep]) @ U[:, keep].T


def integrate_pose(p: Pose, tw: Twist, dt: float) -> Pose:
    """Advance ``p`` by a twist held constant over ``dt``.

    ``tw.v`` is the velocity of the frame origin and ``tw.w`` the angular
    velocity, both in parent (world) coordinates. The motion is the exact
    screw displacement, which reduces to ``t + v*dt`` when ``w`` is zero.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi = tw.w * dt
    R = orthonormalize(exp_so3(phi) @ p.R)
    t = p.t + _left_jacobian_so3(phi) @ tw.v * dt
    return Pose(R, t)
