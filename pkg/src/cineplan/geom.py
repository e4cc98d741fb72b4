"""Pose types, angle wrapping, and rotation distances.

Poses are 4-DoF: 3D position plus yaw about the world z-axis. Full unit
quaternions exist so the kernel can measure generic rotation distances, but
the pipeline keeps roll and pitch at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"angle must be finite, got {theta}")
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    elif wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


@dataclass(frozen=True)
class Pose4:
    """Camera waypoint: position in meters plus yaw in (-pi, pi]."""

    p: np.ndarray
    theta: float

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (3,):
            raise InvalidArgumentError(f"position must be a 3-vector, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("position components must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def forward(self) -> np.ndarray:
        """Horizontal unit vector the camera looks along."""
        return np.array([math.cos(self.theta), math.sin(self.theta), 0.0])

    def to_dict(self) -> dict:
        return {"p": [float(x) for x in self.p], "theta": float(self.theta)}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose4":
        return cls(p=np.asarray(d["p"], dtype=float), theta=float(d["theta"]))


@dataclass(frozen=True)
class UnitQuaternion:
    """Unit quaternion (w, x, y, z), enforced to norm 1 within 1e-9."""

    w: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > 1e-9:
            raise InvalidArgumentError(f"quaternion norm {n} is not 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


def yaw_to_quat(theta: float) -> UnitQuaternion:
    """Rotation of theta about the world z-axis."""
    half = wrap_angle(theta) / 2.0
    return UnitQuaternion(w=math.cos(half), x=0.0, y=0.0, z=math.sin(half))


def rot_distance(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Geodesic angle between two rotations, in [0, pi].

    Invariant under the quaternion double cover: d(q, -q) = 0.
    """
    dot = abs(float(np.dot(a.as_array(), b.as_array())))
    dot = min(dot, 1.0)
    return 2.0 * math.acos(dot)
