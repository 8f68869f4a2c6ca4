"""
Explicit LiDAR-camera interaction as deterministic transforms:
  - sparse depth supervision: LiDAR points projected into every camera;
  - appearance rendering: camera RGB attached to LiDAR points, then
    spherically projected into a 4-channel range image;
  - the camera branch's per-camera depth maps fused into one holistic range
    image in the LiDAR frame.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from fusionpr import config
from fusionpr.errors import ArgumentError, ConfigurationError, ShapeError
from fusionpr.geometry import (
    CameraIntrinsics,
    PointCloud,
    Pose,
    RangeImage,
    SphericalConfig,
    compose,
    invert,
    project_points_to_camera,
    spherical_projection,
    transform_points,
    zbuffer_winners,
)

logger = logging.getLogger(__name__)


# ── Rig and image types ──────────────────────────────────────────────

@dataclass(frozen=True)
class Camera:
    name: str
    intrinsics: CameraIntrinsics
    T_ego_cam: Pose


@dataclass(frozen=True)
class CameraRig:
    cameras: Tuple[Camera, ...]

    def __post_init__(self):
        cams = tuple(self.cameras)
        if not cams:
            raise ConfigurationError("a camera rig needs at least one camera")
        names = [c.name for c in cams]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"camera names must be unique: {names}")
        object.__setattr__(self, "cameras", cams)

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self) -> Iterator[Camera]:
        return iter(self.cameras)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.cameras]

    def camera(self, name: str) -> Camera:
        for cam in self.cameras:
            if cam.name == name:
                return cam
        raise ConfigurationError(f"no camera named {name!r}")


@dataclass(frozen=True, eq=False)
class Image:
    """RGB image, (height, width, 3) floats in [0, 1]."""
    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"image must be (H, W, 3), got {px.shape}")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_uint8(cls, pixels) -> "Image":
        return cls(np.asarray(pixels, dtype=np.uint8).astype(np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.floor(self.pixels * 255.0 + 0.5), 0, 255).astype(np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-camera depth grid in meters; 0 means no value."""
    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ShapeError(f"depth map must be 2-D, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ArgumentError("depth values must be finite and nonnegative")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @classmethod
    def zeros(cls, width: int, height: int) -> "DepthMap":
        return cls(np.zeros((height, width)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class CameraTargets:
    """Sparse depth targets of one camera, ordered by pixel (row-major)."""
    camera: str
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray

    def __len__(self) -> int:
        return len(self.depth)

    def as_tuples(self) -> List[Tuple[int, int, float]]:
        return [(int(u), int(v), float(d)) for u, v, d in zip(self.u, self.v, self.depth)]


@dataclass(frozen=True)
class SparseDepthTargets:
    cameras: Tuple[CameraTargets, ...]

    @property
    def total(self) -> int:
        return sum(len(t) for t in self.cameras)

    def for_camera(self, name: str) -> CameraTargets:
        for targets in self.cameras:
            if targets.camera == name:
                return targets
        raise ConfigurationError(f"no targets for camera {name!r}")


@dataclass(frozen=True, eq=False)
class ColoredPointCloud:
    """A point cloud with per-point RGB and a visibility flag."""
    cloud: PointCloud
    colors: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        colors = np.array(self.colors, dtype=np.float64).reshape(-1, 3)
        visible = np.array(self.visible, dtype=bool).reshape(-1)
        if len(colors) != len(self.cloud) or len(visible) != len(self.cloud):
            raise ShapeError("colors and visibility must align with the cloud")
        if np.any(colors[~visible] != 0.0):
            raise ArgumentError("invisible points must carry color (0, 0, 0)")
        colors.flags.writeable = False
        visible.flags.writeable = False
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "visible", visible)

    @property
    def xyz(self) -> np.ndarray:
        return self.cloud.xyz

    def __len__(self) -> int:
        return len(self.cloud)

    def strip(self) -> PointCloud:
        return self.cloud


def camera_from_lidar(camera: Camera, T_ego_lidar: Pose) -> Pose:
    return compose(invert(camera.T_ego_cam), T_ego_lidar)


# ── Sparse depth supervision ─────────────────────────────────────────

def render_sparse_depth(cloud: PointCloud, rig: CameraRig, T_ego_lidar: Pose,
                        near_clip: float = config.NEAR_CLIP_M) -> SparseDepthTargets:
    """Project LiDAR points into each camera; one target per pixel, nearest depth wins."""
    per_camera = []
    for cam in rig:
        if len(cloud) == 0:
            empty_i = np.zeros(0, dtype=np.int64)
            per_camera.append(CameraTargets(cam.name, empty_i, empty_i.copy(), np.zeros(0)))
            continue
        in_cam = transform_points(cloud, camera_from_lidar(cam, T_ego_lidar))
        proj = project_points_to_camera(in_cam.xyz, cam.intrinsics, near_clip)
        idx = np.flatnonzero(proj.accepted)
        flat = proj.v_index[idx] * cam.intrinsics.width + proj.u_index[idx]
        winners = idx[zbuffer_winners(flat, proj.depth[idx])]
        per_camera.append(CameraTargets(
            cam.name, proj.u_index[winners], proj.v_index[winners], proj.depth[winners]))
    return SparseDepthTargets(tuple(per_camera))


def render_depth_maps(targets: SparseDepthTargets, rig: CameraRig) -> List[DepthMap]:
    """Rasterize sparse targets into one depth map per rig camera."""
    maps = []
    for cam in rig:
        data = np.zeros((cam.intrinsics.height, cam.intrinsics.width))
        t = targets.for_camera(cam.name)
        data[t.v, t.u] = t.depth
        maps.append(DepthMap(data))
    return maps


# ── Appearance rendering ─────────────────────────────────────────────

def _check_images(images: Sequence[Image], rig: CameraRig) -> None:
    if len(images) != len(rig):
        raise ConfigurationError(f"{len(images)} images for a rig of {len(rig)} cameras")
    for image, cam in zip(images, rig):
        if image.width != cam.intrinsics.width or image.height != cam.intrinsics.height:
            raise ConfigurationError(
                f"image for {cam.name} is {image.width}x{image.height}, "
                f"intrinsics say {cam.intrinsics.width}x{cam.intrinsics.height}")


def colorize_cloud(cloud: PointCloud, images: Sequence[Image], rig: CameraRig, T_ego_lidar: Pose,
                   near_clip: float = config.NEAR_CLIP_M) -> ColoredPointCloud:
    """
    Attach RGB to every point seen by at least one camera, sampling the camera
    with the smallest projection depth (earlier rig camera on ties).
    """
    _check_images(images, rig)
    n = len(cloud)
    colors = np.zeros((n, 3))
    best = np.full(n, np.inf)
    if n:
        for image, cam in zip(images, rig):
            in_cam = transform_points(cloud, camera_from_lidar(cam, T_ego_lidar))
            proj = project_points_to_camera(in_cam.xyz, cam.intrinsics, near_clip)
            better = proj.accepted & (proj.depth < best)
            colors[better] = image.pixels[proj.v_index[better], proj.u_index[better]]
            best[better] = proj.depth[better]
    visible = np.isfinite(best)
    return ColoredPointCloud(cloud, colors, visible)


def rendered_range_image(colored: ColoredPointCloud, cfg: SphericalConfig = None) -> RangeImage:
    """4-channel (range, R, G, B) spherical projection of a colored cloud."""
    return spherical_projection(colored, cfg or SphericalConfig.lidar())


# ── Camera branch: depth maps to a holistic range image ──────────────

def depth_maps_to_lidar_range(depths: Sequence[DepthMap], rig: CameraRig, T_ego_lidar: Pose,
                              cfg: SphericalConfig = None) -> RangeImage:
    """Unproject every nonzero depth pixel, move it to the LiDAR frame and project it."""
    cfg = cfg or SphericalConfig.camera_branch()
    if len(depths) != len(rig):
        raise ShapeError(f"{len(depths)} depth maps for a rig of {len(rig)} cameras")
    lidar_from_ego = invert(T_ego_lidar)
    chunks = []
    for depth, cam in zip(depths, rig):
        intr = cam.intrinsics
        if depth.width != intr.width or depth.height != intr.height:
            raise ShapeError(
                f"depth map for {cam.name} is {depth.width}x{depth.height}, "
                f"intrinsics say {intr.width}x{intr.height}")
        rows, cols = np.nonzero(depth.data)
        if len(rows) == 0:
            continue
        d = depth.data[rows, cols]
        xyz = np.column_stack([(cols - intr.cx) / intr.fx * d, (rows - intr.cy) / intr.fy * d, d])
        lidar_from_cam = compose(lidar_from_ego, cam.T_ego_cam)
        chunks.append(transform_points(PointCloud.from_xyz(xyz), lidar_from_cam).points)
    if not chunks:
        return RangeImage.empty(cfg)
    return spherical_projection(PointCloud(np.vstack(chunks)), cfg)
