"""
Shared test fixtures -- small geometric objects, scenes and descriptor sets.
"""
import datetime

import numpy as np

from fusionpr.benchmark import GroundTruthEntry, Sample, Scene
from fusionpr.descriptor import DescriptorSet
from fusionpr.geometry import CameraIntrinsics, PointCloud, Pose, RangeImage, SphericalConfig
from fusionpr.interaction import Camera, CameraRig
from fusionpr.synthetic import camera_rotation


# ── Geometry fixtures ────────────────────────────────────────────────

def make_pose(x=0.0, y=0.0, z=0.0, yaw=0.0):
    return Pose.from_yaw(yaw, (x, y, z))


def make_cloud(points=None, n=50, seed=0, spread=20.0):
    """Explicit (N, 3) points, or n random points around the sensor."""
    if points is not None:
        return PointCloud.from_xyz(np.asarray(points, dtype=np.float64))
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-spread, spread, size=(n, 3))
    xyz[:, 2] = rng.uniform(-3.0, 2.0, size=n)
    return PointCloud.from_xyz(xyz, rng.uniform(0.0, 1.0, size=n))


def make_intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=40.0, width=100, height=80):
    return CameraIntrinsics(fx, fy, cx, cy, width, height)


def make_camera(name="front", yaw=0.0, translation=(0.0, 0.0, 0.0), intrinsics=None):
    """Level camera looking along `yaw` in the ego frame."""
    return Camera(name, intrinsics or make_intrinsics(),
                  Pose.from_matrix(camera_rotation(yaw), translation))


def make_rig(yaws=(0.0,), intrinsics=None):
    return CameraRig(tuple(make_camera(f"cam{i}", yaw, intrinsics=intrinsics) for i, yaw in enumerate(yaws)))


def make_spherical(width=64, height=16):
    return SphericalConfig(width=width, height=height)


def make_range_image(cfg=None, fill=0.3, seed=0, channels=1):
    """Random valid ranges in [r_min, r_max] on a `fill` share of pixels."""
    cfg = cfg or make_spherical()
    rng = np.random.default_rng(seed)
    data = np.zeros((channels, cfg.height, cfg.width), dtype=np.float32)
    mask = rng.uniform(size=(cfg.height, cfg.width)) < fill
    data[0][mask] = rng.uniform(cfg.r_min, cfg.r_max, size=int(mask.sum()))
    for c in range(1, channels):
        data[c][mask] = rng.uniform(0.0, 1.0, size=int(mask.sum()))
    return RangeImage(data)


# ── Benchmark fixtures ───────────────────────────────────────────────

def make_sample(sample_id="s0", scene_id="scene-a", x=0.0, y=0.0, timestamp=0):
    return Sample(sample_id, scene_id, timestamp, make_pose(x, y))


def make_scene(scene_id="scene-a", day=datetime.date(2018, 7, 1), positions=(), prefix=None):
    """Scene whose samples sit at the given (x, y) positions, one per 0.5 s."""
    prefix = prefix or scene_id
    samples = tuple(
        make_sample(f"{prefix}-{j:04d}", scene_id, x, y, timestamp=j * 500_000)
        for j, (x, y) in enumerate(positions)
    )
    return Scene(scene_id, day, samples)


def make_line_scene(scene_id="scene-a", day=datetime.date(2018, 7, 1), n=15, step=2.0, y=0.0):
    return make_scene(scene_id, day, [(j * step, y) for j in range(n)])


# ── Retrieval fixtures ───────────────────────────────────────────────

def make_descriptor_set(n=10, dim=8, seed=0, prefix="d"):
    rng = np.random.default_rng(seed)
    ids = [f"{prefix}{i:03d}" for i in range(n)]
    return DescriptorSet(ids, rng.normal(size=(n, dim)).astype(np.float32), dim=dim)


def make_entry(query_id, gt=()):
    return GroundTruthEntry(query_id, tuple(gt))
