"""Pinhole-camera algebra, rigid transforms, and depth/disparity maps.

Conventions (fixed for the whole package):
  * camera frame is right-handed with +z pointing into the scene,
  * image origin is the top-left corner, u grows right, v grows down,
  * pixel centers sit at integer coordinates.

All types are immutable values; operations are pure functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCameraError, InvalidInputError

# Depth below 1/MAX_DISPARITY is clamped before taking reciprocals so
# disparity stays finite.
MAX_DISPARITY = 1.0e4

# Vertical field of view used when the caller supplies no intrinsics.
DEFAULT_VFOV_DEG = 55.0

OBJECT_CENTROID = "object-centroid"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError(
                f"principal point ({self.cx},{self.cy}) outside image {self.width}x{self.height}"
            )

    @staticmethod
    def default(width: int, height: int, vfov_deg: float = DEFAULT_VFOV_DEG) -> "CameraIntrinsics":
        """Square-pixel intrinsics with the principal point at the image center."""
        f = (height / 2.0) / math.tan(math.radians(vfov_deg) / 2.0)
        return CameraIntrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                                width=width, height=height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @staticmethod
    def from_json(obj: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(fx=float(obj["fx"]), fy=float(obj["fy"]),
                                cx=float(obj["cx"]), cy=float(obj["cy"]),
                                width=int(obj["width"]), height=int(obj["height"]))


def _quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0:
        raise InvalidInputError("quaternion must be non-zero and finite")
    q = q / n
    # Canonical sign: w >= 0 keeps composition/inversion round trips stable.
    if q[0] < 0:
        q = -q
    return q


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product of two (w,x,y,z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit (w,x,y,z) quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise InvalidInputError("rotation axis must be non-zero")
    axis = axis / n
    half = angle_rad / 2.0
    return _quat_normalize(np.concatenate([[math.cos(half)], math.sin(half) * axis]))


def quat_slerp(q, fraction: float) -> np.ndarray:
    """Spherical interpolation from identity toward unit quaternion ``q``."""
    w = np.clip(q[0], -1.0, 1.0)
    angle = 2.0 * math.acos(w)
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = q[1:] / math.sin(angle / 2.0)
    return quat_from_axis_angle(axis, angle * fraction)


def fraction_of_transform(transform: RigidTransform, fraction: float) -> RigidTransform:
    """Partial edit: slerped rotation, scaled translation, powered scale.

    The pivot (symbolic or concrete) passes through unchanged, so chained
    partial edits about an object centroid keep following the object.
    """
    return RigidTransform(
        rotation=quat_slerp(transform.rotation, fraction),
        translation=np.asarray(transform.translation) * fraction,
        pivot=transform.pivot,
        scale=float(transform.scale) ** fraction,
    )


@dataclass(frozen=True)
class RigidTransform:
    """User edit in camera frame: rotation about a pivot, uniform scale, then translation.

    ``pivot`` may be the sentinel string ``"object-centroid"``; it must be
    resolved to a concrete point (see :meth:`resolve_pivot`) before the
    transform is applied to geometry.
    """

    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    translation: np.ndarray  # meters
    pivot: np.ndarray | str = OBJECT_CENTROID
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", _quat_normalize(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be a finite 3-vector")
        object.__setattr__(self, "translation", t)
        if isinstance(self.pivot, str):
            if self.pivot != OBJECT_CENTROID:
                raise InvalidInputError(f"unknown pivot sentinel {self.pivot!r}")
        else:
            p = np.asarray(self.pivot, dtype=np.float64)
            if p.shape != (3,) or not np.all(np.isfinite(p)):
                raise InvalidInputError("pivot must be a finite 3-vector")
            object.__setattr__(self, "pivot", p)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidInputError(f"scale must be positive, got {self.scale}")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(rotation=np.array([1.0, 0.0, 0.0, 0.0]),
                              translation=np.zeros(3), pivot=np.zeros(3), scale=1.0)

    @property
    def has_symbolic_pivot(self) -> bool:
        return isinstance(self.pivot, str)

    def resolve_pivot(self, centroid) -> "RigidTransform":
        """Replace an ``object-centroid`` pivot with the given 3D point."""
        if not self.has_symbolic_pivot:
            return self
        return replace(self, pivot=np.asarray(centroid, dtype=np.float64))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def _affine(self):
        """Equivalent (A, b) with p -> A p + b. Requires a resolved pivot."""
        if self.has_symbolic_pivot:
            raise InvalidInputError("pivot 'object-centroid' must be resolved before use")
        R = self.rotation_matrix()
        A = self.scale * R
        b = self.pivot + self.translation - A @ self.pivot
        return A, b

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        A1, b1 = self._affine()
        A2, b2 = other._affine()
        q = quat_multiply(self.rotation, other.rotation)
        s = self.scale * other.scale
        b = A1 @ b2 + b1
        return RigidTransform(rotation=q, translation=b, pivot=np.zeros(3), scale=s)

    def inverse(self) -> "RigidTransform":
        A, b = self._affine()
        qw, qx, qy, qz = self.rotation
        q_inv = np.array([qw, -qx, -qy, -qz])
        s_inv = 1.0 / self.scale
        R_inv = quat_to_matrix(q_inv)
        b_inv = -s_inv * (R_inv @ b)
        return RigidTransform(rotation=q_inv, translation=b_inv, pivot=np.zeros(3), scale=s_inv)

    def to_json(self) -> dict:
        pivot = self.pivot if isinstance(self.pivot, str) else [float(x) for x in self.pivot]
        return {"rotation": [float(x) for x in self.rotation],
                "translation": [float(x) for x in self.translation],
                "pivot": pivot,
                "scale": float(self.scale)}

    @staticmethod
    def from_json(obj: dict) -> "RigidTransform":
        pivot = obj.get("pivot", OBJECT_CENTROID)
        if not isinstance(pivot, str):
            pivot = np.asarray(pivot, dtype=np.float64)
        return RigidTransform(rotation=np.asarray(obj["rotation"], dtype=np.float64),
                              translation=np.asarray(obj["translation"], dtype=np.float64),
                              pivot=pivot,
                              scale=float(obj.get("scale", 1.0)))


def apply_transform(transform: RigidTransform, points) -> np.ndarray:
    """Apply ``R (s (p - pivot)) + pivot + t`` to one point or an (N,3) array."""
    A, b = transform._affine()
    pts = np.asarray(points, dtype=np.float64)
    return pts @ A.T + b


def unproject(pixel, depth, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift pixel coordinates (u,v) at the given metric depth to camera-frame 3D.

    ``pixel`` is a 2-vector or (N,2) array, ``depth`` a scalar or (N,) array.
    """
    px = np.asarray(pixel, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise InvalidInputError("depth must be positive and finite")
    u = px[..., 0]
    v = px[..., 1]
    x = (u - intrinsics.cx) * d / intrinsics.fx
    y = (v - intrinsics.cy) * d / intrinsics.fy
    return np.stack([x, y, d * np.ones_like(x)], axis=-1)


def project(point, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame 3D points to pixel coordinates (may fall outside the image)."""
    pts = np.asarray(point, dtype=np.float64)
    z = pts[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("projection requires z > 0")
    u = intrinsics.fx * pts[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * pts[..., 1] / z + intrinsics.cy
    return np.stack([u, v], axis=-1)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth; NaN marks invalid pixels.

    Values are float64 in memory; the on-disk interchange format is float32.
    """

    values: np.ndarray  # (H, W) float64
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidInputError("depth values must be a 2D array")
        if v.shape != (self.intrinsics.height, self.intrinsics.width):
            raise InvalidInputError(
                f"depth shape {v.shape} does not match intrinsics "
                f"{self.intrinsics.height}x{self.intrinsics.width}"
            )
        finite = np.isfinite(v)
        if np.any(v[finite] <= 0):
            raise InvalidInputError("valid depth entries must be positive")
        if np.any(np.isinf(v)):
            raise InvalidInputError("depth entries must be finite or NaN")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def with_values(self, values) -> "DepthMap":
        return DepthMap(values=np.asarray(values, dtype=np.float64), intrinsics=self.intrinsics)


@dataclass(frozen=True)
class DisparityMap:
    """Reciprocal depth (1/m); NaN marks invalid pixels."""

    values: np.ndarray  # (H, W) float64
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.ndim != 2:
            raise InvalidInputError("disparity values must be a 2D array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def depth_to_disparity(depth: DepthMap, max_disparity: float = MAX_DISPARITY) -> DisparityMap:
    """Elementwise reciprocal; NaN propagates, near-zero depth clamps to max_disparity."""
    d = depth.values.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        disp = 1.0 / np.maximum(d, 1.0 / max_disparity)
    disp[~np.isfinite(d)] = np.nan
    return DisparityMap(values=disp, intrinsics=depth.intrinsics)


def disparity_to_depth(disparity: DisparityMap, max_disparity: float = MAX_DISPARITY) -> DepthMap:
    """Inverse of :func:`depth_to_disparity` (exact for depth above 1/max_disparity)."""
    s = disparity.values.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = 1.0 / np.clip(s, 1.0 / 1e9, max_disparity)
    depth[~np.isfinite(s)] = np.nan
    return DepthMap(values=depth, intrinsics=disparity.intrinsics)


def load_transform(path) -> RigidTransform:
    with open(path, "r", encoding="utf-8") as f:
        return RigidTransform.from_json(json.load(f))


def load_intrinsics(path) -> CameraIntrinsics:
    with open(path, "r", encoding="utf-8") as f:
        return CameraIntrinsics.from_json(json.load(f))
