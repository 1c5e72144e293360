"""Pinhole camera model and depth-based reprojection between two views.

Conventions: right-handed camera frame with x right, y down, z forward.
Pixel (0, 0) is the center of the top-left pixel. A ``RigidTransform`` used
for reprojection maps points from the target camera frame (time t) into the
source camera frame (time t').
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import InvalidInputError, SingularityError

# Sample coordinate assigned to points at or behind the source camera.
SENTINEL_COORD = -1.0e6

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Zero-skew pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InvalidInputError(f"intrinsics {name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def to_dict(self) -> dict[str, float]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Intrinsics":
        try:
            return cls(float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"]))
        except KeyError as exc:
            raise InvalidInputError(f"intrinsics missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad intrinsics value: {exc}") from None

    @classmethod
    def kitti_like(cls, width: int, height: int) -> "Intrinsics":
        """Intrinsics with the normalized KITTI focal lengths scaled to a resolution."""
        return cls(0.58 * width, 1.92 * height, 0.5 * width, 0.5 * height)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation, acting on points as ``p' = R p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise InvalidInputError("rigid transform contains non-finite values")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > _ORTHO_TOL:
            raise InvalidInputError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise InvalidInputError("rotation determinant is not +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidInputError(f"expected a 4x4 matrix, got shape {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(axis_angle_rotation(axis, angle), translation)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        # (self @ other)(p) == self(other(p))
        return RigidTransform(
            _reorthonormalize(self.rotation @ other.rotation),
            self.rotation @ other.translation + self.translation,
        )

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return transform_points(points, self)

    def to_dict(self) -> dict[str, list[float]]:
        return {
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RigidTransform":
        try:
            rot = np.asarray(data["rotation"], dtype=np.float64)
            trans = np.asarray(data["translation"], dtype=np.float64)
        except KeyError as exc:
            raise InvalidInputError(f"transform missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad transform value: {exc}") from None
        if rot.size != 9 or trans.size != 3:
            raise InvalidInputError("transform needs 9 rotation and 3 translation numbers")
        return cls(rot.reshape(3, 3), trans)


def _reorthonormalize(rot: np.ndarray) -> np.ndarray:
    # Keeps long composition chains inside the orthonormality tolerance.
    u, _, vt = np.linalg.svd(rot)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of ``angle`` radians about ``axis``."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise InvalidInputError("rotation axis must be nonzero")
    x, y, z = a / norm
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def yaw_rotation(angle: float) -> np.ndarray:
    """Rotation about the camera y (down) axis."""
    return axis_angle_rotation((0.0, 1.0, 0.0), angle)


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Per-pixel sample coordinates in a source image and the projected depth.

    ``u`` and ``v`` are the column and row at which each target pixel should be
    sampled; ``z_proj`` is the depth of the target point in the source frame.
    """

    u: np.ndarray
    v: np.ndarray
    z_proj: np.ndarray

    def __post_init__(self) -> None:
        if not (self.u.shape == self.v.shape == self.z_proj.shape):
            raise InvalidInputError("sample grid components must share a shape")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.u.shape


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Column and row index arrays of shape (height, width)."""
    v, u = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    return u, v


def _check_depth(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(depth)):
        raise InvalidInputError("depth contains non-finite values")
    if np.any(depth <= 0):
        raise InvalidInputError("depth must be strictly positive")
    return depth


def backproject(u, v, depth, k: Intrinsics) -> np.ndarray:
    """Lift pixel coordinates with depth to camera-frame points of shape (..., 3)."""
    depth = _check_depth(depth)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != depth.shape or v.shape != depth.shape:
        raise InvalidInputError(f"coordinate shapes {u.shape}, {v.shape} do not match depth {depth.shape}")
    x = (u - k.cx) / k.fx * depth
    y = (v - k.cy) / k.fy * depth
    return np.stack([x, y, depth], axis=-1)


def transform_points(points: np.ndarray, t: RigidTransform) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ t.rotation.T + t.translation


def project(points: np.ndarray, k: Intrinsics) -> SampleGrid:
    """Project camera-frame points to pixel coordinates.

    Points with ``z <= 0`` get the sentinel coordinate so every in-bounds test
    rejects them; their depth is carried through unchanged.
    """
    points = np.asarray(points, dtype=np.float64)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    front = z > 0
    safe_z = np.where(front, z, 1.0)
    u = np.where(front, k.fx * x / safe_z + k.cx, SENTINEL_COORD)
    v = np.where(front, k.fy * y / safe_z + k.cy, SENTINEL_COORD)
    return SampleGrid(u, v, z.copy())


def reproject(depth: np.ndarray, k: Intrinsics, t: RigidTransform) -> SampleGrid:
    """Sample locations in the source view for every pixel of the target view."""
    depth = _check_depth(depth)
    if depth.ndim != 2:
        raise InvalidInputError(f"depth map must be 2-D, got shape {depth.shape}")
    u, v = pixel_grid(*depth.shape)
    if t.is_identity():
        # the general path can be off by an ulp; identity must reproduce the grid exactly
        return SampleGrid(u, v, depth.copy())
    return project(transform_points(backproject(u, v, depth, k), t), k)


def sample_jacobian_wrt_depth(pixel, depth_value, k: Intrinsics, t: RigidTransform):
    """Analytic derivative of the sample location (u, v) w.r.t. target depth.

    ``pixel`` is ``(u, v)``; scalars or broadcastable arrays are accepted.
    Returns ``(du_dz, dv_dz)``.
    """
    pu, pv = (np.asarray(c, dtype=np.float64) for c in pixel)
    z = np.asarray(depth_value, dtype=np.float64)
    ray = np.stack(np.broadcast_arrays((pu - k.cx) / k.fx, (pv - k.cy) / k.fy, np.ones_like(pu)), axis=-1)
    direction = ray @ t.rotation.T  # d q / d z
    q = z[..., None] * direction + t.translation
    qz = q[..., 2]
    if np.any(qz <= 0):
        raise SingularityError("projected depth is not positive; sample location is undefined")
    du = k.fx * (direction[..., 0] * qz - q[..., 0] * direction[..., 2]) / qz**2
    dv = k.fy * (direction[..., 1] * qz - q[..., 1] * direction[..., 2]) / qz**2
    if du.ndim == 0:
        return float(du), float(dv)
    return du, dv
