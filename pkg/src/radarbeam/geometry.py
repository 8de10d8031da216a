"""SE(2) pose algebra: yaw rotations, homogeneous transforms, relative poses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(a) == 0:
        w = math.remainder(float(a), TWO_PI)
        return math.pi if w <= -math.pi else w
    w = np.remainder(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(w <= -math.pi, math.pi, w)


def rotation_from_yaw(theta: float) -> np.ndarray:
    if not math.isfinite(theta):
        raise ValueError(f"yaw must be finite, got {theta!r}")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def yaw_from_rotation(R: np.ndarray) -> float:
    return wrap_angle(math.atan2(R[1, 0], R[0, 0]))


def _vec2(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(2)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"position must be finite, got {arr!r}")
    return arr


@dataclass(frozen=True)
class Pose2:
    """Vehicle pose in the world frame: position ``r`` (m) and yaw ``theta`` (rad)."""

    r: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "r", _vec2(self.r))
        if not math.isfinite(self.theta):
            raise ValueError(f"yaw must be finite, got {self.theta!r}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def x(self) -> float:
        return float(self.r[0])

    @property
    def y(self) -> float:
        return float(self.r[1])

    def to_transform(self) -> Transform2:
        return Transform2(rotation_from_yaw(self.theta), self.r.copy())


@dataclass(frozen=True)
class RelativePose:
    """Motion between consecutive slots, expressed in the earlier vehicle frame."""

    dr: np.ndarray
    dtheta: float

    def __post_init__(self):
        object.__setattr__(self, "dr", _vec2(self.dr))
        object.__setattr__(self, "dtheta", wrap_angle(self.dtheta))

    @classmethod
    def identity(cls) -> RelativePose:
        return cls(np.zeros(2), 0.0)

    @classmethod
    def from_vector(cls, v) -> RelativePose:
        return cls(np.array([v[0], v[1]], dtype=float), float(v[2]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.dr[0], self.dr[1], self.dtheta])

    def to_transform(self) -> Transform2:
        return Transform2(rotation_from_yaw(self.dtheta), self.dr.copy())


@dataclass(frozen=True)
class Transform2:
    """Homogeneous SE(2) transform ``x -> R x + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(2, 2)
        if not np.allclose(R.T @ R, np.eye(2), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R is not a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", _vec2(self.t))

    @classmethod
    def identity(cls) -> Transform2:
        return cls(np.eye(2), np.zeros(2))

    @property
    def yaw(self) -> float:
        return yaw_from_rotation(self.R)

    def matrix(self) -> np.ndarray:
        T = np.eye(3)
        T[:2, :2] = self.R
        T[:2, 2] = self.t
        return T

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 2) array of points."""
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def to_pose(self) -> Pose2:
        return Pose2(self.t.copy(), self.yaw)

    def __matmul__(self, other: Transform2) -> Transform2:
        return compose(self, other)


def compose(a: Transform2, b: Transform2) -> Transform2:
    """Return ``a * b`` (apply ``b`` first)."""
    return Transform2(a.R @ b.R, a.R @ b.t + a.t)


def inverse(t: Transform2) -> Transform2:
    Rt = t.R.T
    return Transform2(Rt, -Rt @ t.t)


def relative_pose(prev: Transform2, cur: Transform2) -> RelativePose:
    """Extract the motion ``prev^-1 * cur``.

    The yaw change is taken as the shortest arc between the two headings.
    """
    d = compose(inverse(prev), cur)
    return RelativePose(d.t, wrap_angle(cur.yaw - prev.yaw))


def apply_relative(pose: Pose2, delta: RelativePose) -> Pose2:
    """Chain a relative motion onto an absolute pose."""
    return compose(pose.to_transform(), delta.to_transform()).to_pose()
