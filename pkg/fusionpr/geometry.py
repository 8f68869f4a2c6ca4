"""
Rigid transforms, pinhole projection and spherical (range image) projection.

Conventions:
  - Quaternions are (w, x, y, z); scipy's Rotation uses (x, y, z, w).
  - Pose a * b applies b first, then a (a.compose(b) maps b's source frame
    into a's target frame).
  - Camera frames are z forward, x right, y down.
  - Range images are float32 arrays shaped (channels, height, width); a pixel
    is invalid iff its range channel is 0, and invalid pixels are 0 in every
    channel.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from fusionpr import config
from fusionpr.errors import ArgumentError, InvalidPoseError, ShapeError

QUATERNION_TOLERANCE = 1e-9


# ── Poses ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (unit quaternion w,x,y,z) then translation (m)."""
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        q = tuple(float(v) for v in self.rotation)
        if len(t) != 3 or len(q) != 4:
            raise InvalidPoseError("pose needs 3 translation and 4 quaternion components")
        if not all(math.isfinite(v) for v in t + q):
            raise InvalidPoseError("pose components must be finite")
        norm = math.sqrt(sum(v * v for v in q))
        if abs(norm - 1.0) > QUATERNION_TOLERANCE:
            raise InvalidPoseError(f"quaternion norm {norm!r} is not 1")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Rotation about +z by `yaw` radians."""
        return cls(translation, (math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)))

    @classmethod
    def from_matrix(cls, matrix, translation=None) -> "Pose":
        """Build from a 3x3 rotation (plus translation) or a 4x4 homogeneous matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape == (4, 4):
            rot, trans = m[:3, :3], m[:3, 3]
        elif m.shape == (3, 3):
            rot, trans = m, np.zeros(3) if translation is None else translation
        else:
            raise ShapeError(f"expected a 3x3 or 4x4 matrix, got {m.shape}")
        return cls(tuple(np.asarray(trans, dtype=np.float64)), _quat_from_rotation(Rotation.from_matrix(rot)))

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return np.array([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {"translation": list(self.translation), "rotation": list(self.rotation)}

    def __mul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


def _to_scipy(pose: Pose) -> Rotation:
    w, x, y, z = pose.rotation
    return Rotation.from_quat([x, y, z, w])


def _quat_from_rotation(rot: Rotation) -> Tuple[float, float, float, float]:
    x, y, z, w = rot.as_quat()
    if w < 0.0:
        x, y, z, w = -x, -y, -z, -w
    return (float(w), float(x), float(y), float(z))


def compose(a: Pose, b: Pose) -> Pose:
    """a * b: apply b, then a."""
    rot = _to_scipy(a) * _to_scipy(b)
    trans = a.rotation_matrix() @ np.asarray(b.translation) + np.asarray(a.translation)
    return Pose(tuple(trans), _quat_from_rotation(rot))


def invert(a: Pose) -> Pose:
    rot = _to_scipy(a).inv()
    trans = -(a.rotation_matrix().T @ np.asarray(a.translation))
    return Pose(tuple(trans), _quat_from_rotation(rot))


def _apply(pose: Pose, xyz: np.ndarray) -> np.ndarray:
    # Written out per component so a point maps to the same bits whether it is
    # transformed alone or inside a larger cloud.
    r = pose.rotation_matrix()
    t = pose.translation
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    out = np.empty_like(xyz)
    for row in range(3):
        out[:, row] = r[row, 0] * x + r[row, 1] * y + r[row, 2] * z + t[row]
    return out


# ── Point clouds ─────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PointCloud:
    """Sensor-frame points as an (N, 4) float64 array of x, y, z, intensity."""
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ShapeError(f"point array must be (N, 4), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ShapeError("point coordinates must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_xyz(cls, xyz, intensity=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        if intensity is None:
            intensity = np.zeros(len(xyz))
        return cls(np.column_stack([xyz, np.asarray(intensity, dtype=np.float64)]))

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and np.array_equal(self.points, other.points)

    __hash__ = None


def transform_points(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Rotate then translate every point; intensity is carried through."""
    if len(cloud) == 0:
        return PointCloud()
    out = np.empty_like(cloud.points)
    out[:, :3] = _apply(pose, cloud.xyz)
    out[:, 3] = cloud.intensity
    return PointCloud(out)


# ── Pinhole cameras ──────────────────────────────────────────────────

@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = config.IMAGE_WIDTH
    height: int = config.IMAGE_HEIGHT

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ArgumentError("focal lengths must be positive")
        if not (int(self.width) > 0 and int(self.height) > 0):
            raise ArgumentError("image size must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass(frozen=True)
class CameraProjection:
    """Vectorized projection result; arrays are aligned with the input points."""
    accepted: np.ndarray
    u: np.ndarray
    v: np.ndarray
    u_index: np.ndarray
    v_index: np.ndarray
    depth: np.ndarray


def round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5).astype(np.int64)


def project_points_to_camera(xyz, intr: CameraIntrinsics,
                             near_clip: float = config.NEAR_CLIP_M) -> CameraProjection:
    """
    Project camera-frame points. A point is accepted iff z > near_clip and its
    nearest-integer pixel lies inside the image.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    z = xyz[:, 2]
    in_front = z > near_clip
    safe_z = np.where(in_front, z, 1.0)
    u = np.where(in_front, intr.fx * xyz[:, 0] / safe_z + intr.cx, np.nan)
    v = np.where(in_front, intr.fy * xyz[:, 1] / safe_z + intr.cy, np.nan)
    u_index = np.where(in_front, round_half_up(np.nan_to_num(u)), -1)
    v_index = np.where(in_front, round_half_up(np.nan_to_num(v)), -1)
    accepted = (in_front & (u_index >= 0) & (u_index < intr.width)
                & (v_index >= 0) & (v_index < intr.height))
    return CameraProjection(accepted, u, v, u_index, v_index, z.copy())


def project_to_camera(point_cam, intr: CameraIntrinsics,
                      near_clip: float = config.NEAR_CLIP_M) -> Optional[Tuple[float, float, float]]:
    """Single-point form of project_points_to_camera; None when out of view."""
    proj = project_points_to_camera(np.asarray(point_cam, dtype=np.float64).reshape(1, 3), intr, near_clip)
    if not proj.accepted[0]:
        return None
    return float(proj.u[0]), float(proj.v[0]), float(proj.depth[0])


# ── Spherical projection ─────────────────────────────────────────────

@dataclass(frozen=True)
class SphericalConfig:
    width: int = config.LIDAR_RANGE_WIDTH
    height: int = config.LIDAR_RANGE_HEIGHT
    fov_up: float = config.FOV_UP_DEG
    fov_down: float = config.FOV_DOWN_DEG
    r_min: float = config.RANGE_MIN_M
    r_max: float = config.RANGE_MAX_M

    def __post_init__(self):
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ArgumentError("range image size must be positive")
        if not self.fov_up > self.fov_down:
            raise ArgumentError("fov_up must exceed fov_down")
        if not 0.0 <= self.r_min < self.r_max:
            raise ArgumentError("need 0 <= r_min < r_max")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def lidar(cls, **overrides) -> "SphericalConfig":
        return cls(**overrides)

    @classmethod
    def camera_branch(cls, **overrides) -> "SphericalConfig":
        params = {"width": config.CAMERA_RANGE_WIDTH, "height": config.CAMERA_RANGE_HEIGHT}
        params.update(overrides)
        return cls(**params)

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "fov_up": self.fov_up,
                "fov_down": self.fov_down, "r_min": self.r_min, "r_max": self.r_max}


@dataclass(frozen=True, eq=False)
class RangeImage:
    """Spherical panorama: channel 0 is range (m), channels 1-3 optional RGB in [0, 1]."""
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] not in (1, 4):
            raise ShapeError(f"range image must be (1|4, H, W), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def empty(cls, cfg: SphericalConfig, channels: int = 1) -> "RangeImage":
        return cls(np.zeros((channels, cfg.height, cfg.width), dtype=np.float32))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def range(self) -> np.ndarray:
        return self.data[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data[0] > 0

    def shift_columns(self, k: int) -> "RangeImage":
        return RangeImage(np.roll(self.data, k, axis=2))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RangeImage):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    __hash__ = None


def spherical_pixels(xyz: np.ndarray, cfg: SphericalConfig):
    """
    Map points to range-image cells. Returns (keep, u, v, range32) where keep
    marks points inside [r_min, r_max] and the vertical FOV.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    r = np.sqrt(x * x + y * y + z * z)
    r32 = r.astype(np.float32)
    r_stored = r32.astype(np.float64)
    nonzero = r > 0.0
    elevation = np.arcsin(np.clip(np.divide(z, r, out=np.zeros_like(z), where=nonzero), -1.0, 1.0))
    fov_up = math.radians(cfg.fov_up)
    fov_down = math.radians(cfg.fov_down)
    keep = (nonzero & (r_stored >= cfg.r_min) & (r_stored <= cfg.r_max)
            & (elevation >= fov_down) & (elevation <= fov_up))
    u = np.floor(0.5 * (1.0 - np.arctan2(y, x) / math.pi) * cfg.width).astype(np.int64)
    v = np.floor((1.0 - (elevation - fov_down) / (fov_up - fov_down)) * cfg.height).astype(np.int64)
    u = np.clip(u, 0, cfg.width - 1)
    v = np.clip(v, 0, cfg.height - 1)
    return keep, u, v, r32


def zbuffer_winners(flat: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Indices of the nearest entry per cell; equal depths resolve to the earlier entry."""
    if len(flat) == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(flat)), depth, flat))
    _, first = np.unique(flat[order], return_index=True)
    return order[first]


def spherical_projection(cloud, cfg: SphericalConfig) -> RangeImage:
    """
    Project a PointCloud (1 channel) or a colored cloud exposing `colors`
    (4 channels: range, R, G, B). Collisions keep the smallest range.
    """
    colors = getattr(cloud, "colors", None)
    channels = 1 if colors is None else 4
    data = np.zeros((channels, cfg.height, cfg.width), dtype=np.float32)
    if len(cloud) == 0:
        return RangeImage(data)
    keep, u, v, r32 = spherical_pixels(cloud.xyz, cfg)
    idx = np.flatnonzero(keep)
    flat = v[idx] * cfg.width + u[idx]
    winners = idx[zbuffer_winners(flat, r32[idx])]
    rows, cols = v[winners], u[winners]
    data[0, rows, cols] = r32[winners]
    if colors is not None:
        for c in range(3):
            data[c + 1, rows, cols] = colors[winners, c]
    return RangeImage(data)


def unproject_range_image(img: RangeImage, cfg: SphericalConfig) -> PointCloud:
    """Each valid pixel becomes a point on its pixel-center ray; intensity 0."""
    if img.height != cfg.height or img.width != cfg.width:
        raise ShapeError(
            f"range image is {img.height}x{img.width}, config expects {cfg.height}x{cfg.width}")
    rows, cols = np.nonzero(img.valid_mask)
    if len(rows) == 0:
        return PointCloud()
    r = img.range[rows, cols].astype(np.float64)
    fov_up = math.radians(cfg.fov_up)
    fov_down = math.radians(cfg.fov_down)
    azimuth = math.pi * (1.0 - 2.0 * (cols + 0.5) / cfg.width)
    elevation = fov_down + (1.0 - (rows + 0.5) / cfg.height) * (fov_up - fov_down)
    xyz = np.column_stack([
        r * np.cos(elevation) * np.cos(azimuth),
        r * np.cos(elevation) * np.sin(azimuth),
        r * np.sin(elevation),
    ])
    return PointCloud.from_xyz(xyz)
