"""Pinhole camera geometry.

Conventions: camera frames are +Z forward, +X right, +Y down. The world
frame is the robot base with +Z up. Pixel (u, v) = (column, row) and the
center of pixel [row i, col j] sits at integer coordinates (j, i).

The goal-lifting chain is

    back_project   pixel + depth -> camera point      p = z K^-1 [u v 1]^T
    to_world       camera point  -> world point       p_W = T_Wc p
    wrist_pose     ee pose + hand-eye -> camera pose   T_Wcw = T_Wee T_eecw
    project        world point   -> pixel, Z^c        lambda [u v 1]^T = K p_c
    pixel_radius   metric radius -> pixel radius      r_px = fx r / Z^c
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

ORTHO_TOL = 1e-9


class GeometryError(ValueError):
    """Base class for geometry contract violations."""


class NonPositiveDepth(GeometryError):
    pass


class OutOfBounds(GeometryError):
    pass


class FrameMismatch(GeometryError):
    pass


class BehindCamera(GeometryError):
    pass


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Polar projection of a 3x3 matrix onto SO(3)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def _ortho_error(r: np.ndarray) -> float:
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation + translation mapping points from a child frame to a parent frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise GeometryError("transform entries must be finite")
        if _ortho_error(r) > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise GeometryError("rotation is not a proper orthonormal matrix")
        if _ortho_error(r) > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            r = nearest_rotation(r)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, xyz: Iterable[float]) -> "RigidTransform":
        return cls(np.eye(3), np.asarray(list(xyz), dtype=float))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation: Iterable[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.asarray(list(translation), dtype=float))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "RigidTransform":
        """Camera-to-world pose for a camera at ``eye`` whose +Z axis points at ``target``."""
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=float))
        if np.linalg.norm(x) < 1e-9:
            raise GeometryError("viewing direction is parallel to the up vector")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return cls(np.column_stack([x, y, z]), eye)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self @ other``: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    __matmul__ = compose

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix(), other.matrix(), rtol=0.0, atol=atol))


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @classmethod
    def default(cls, width: int = 640, height: int = 480, hfov_deg: float = 56.0) -> "Intrinsics":
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def contains(self, u: float, v: float) -> bool:
        return 0 <= u < self.width and 0 <= v < self.height


@dataclass(frozen=True)
class CameraModel:
    intrinsics: Intrinsics
    world_pose: RigidTransform
    id: str = "head"


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])

    def rounded(self) -> tuple[int, int]:
        """Nearest integer pixel as (row, col)."""
        return int(np.floor(self.v + 0.5)), int(np.floor(self.u + 0.5))


@dataclass(frozen=True)
class WorldPoint:
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, p) -> "WorldPoint":
        x, y, z = (float(c) for c in p)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def distance(self, other: "WorldPoint") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class CameraPoint:
    x: float
    y: float
    z: float
    frame: str

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def back_project(pix: PixelPoint, depth: float, k: Intrinsics, frame: str = "head") -> CameraPoint:
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    if not k.contains(pix.u, pix.v):
        raise OutOfBounds(f"pixel ({pix.u}, {pix.v}) outside {k.width}x{k.height} image")
    # z is returned as `depth` itself, not recomputed, so it is exact
    x = (pix.u - k.cx) / k.fx * depth
    y = (pix.v - k.cy) / k.fy * depth
    return CameraPoint(x, y, float(depth), frame)


def to_world(p: CameraPoint, cam: CameraModel) -> WorldPoint:
    if p.frame != cam.id:
        raise FrameMismatch(f"point is in frame {p.frame!r}, camera is {cam.id!r}")
    return WorldPoint.of(cam.world_pose.apply(p.as_array()))


def to_camera(p: WorldPoint, cam: CameraModel) -> CameraPoint:
    pose = cam.world_pose
    x, y, z = pose.rotation.T @ (p.as_array() - pose.translation)
    return CameraPoint(float(x), float(y), float(z), cam.id)


def wrist_pose(ee_pose: RigidTransform, hand_eye: RigidTransform) -> RigidTransform:
    return ee_pose @ hand_eye


def project(p: WorldPoint, cam: CameraModel) -> tuple[PixelPoint, float]:
    """Project a world point; returns the pixel and the camera-frame depth Z^c.

    Pixels outside the image are returned as-is; visibility is the caller's call.
    """
    pc = to_camera(p, cam)
    if not pc.z > 0:
        raise BehindCamera(f"point has camera depth {pc.z:.6g} in {cam.id!r}")
    k = cam.intrinsics
    u = k.fx * pc.x / pc.z + k.cx
    v = k.fy * pc.y / pc.z + k.cy
    return PixelPoint(u, v), pc.z


def pixel_radius(r: float, zc: float, fx: float) -> float:
    if not zc > 0:
        raise NonPositiveDepth(f"Z^c must be positive, got {zc}")
    if r < 0:
        raise GeometryError("radius must be nonnegative")
    return fx * r / zc
