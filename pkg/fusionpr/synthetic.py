"""
Synthetic multi-scene driving world.

The road is one long arc of a wobbly circle. Scene i starts where the last
`revisit_rate` share of scene i-1 began, so its first samples re-drive that
stretch before moving on to new road. Colored vertical cylinders line the
road; the LiDAR is ray-cast at range-image pixel centers and every camera
is rendered column by column with the nearest cylinder painted on a dark
sky/ground background.
"""
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fusionpr import config
from fusionpr.benchmark import Sample, Scene, resolve_gamma
from fusionpr.dataio import DatasetManifest, write_cloud, write_manifest, write_ppm
from fusionpr.errors import ArgumentError, GenerationError
from fusionpr.geometry import CameraIntrinsics, PointCloud, Pose, SphericalConfig, compose
from fusionpr.interaction import Camera, CameraRig
from fusionpr.serialization import format_date

logger = logging.getLogger(__name__)

DEFAULT_PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
)
SKY_COLOR = (12, 14, 24)
GROUND_COLOR = (30, 30, 32)

LIDAR_HEIGHT_M = 1.84
CAMERA_HEIGHT_M = 1.5
CAMERA_HFOV_DEG = 70.0
WOBBLE_AMPLITUDE_M = 1.5
WOBBLE_PERIOD_M = 97.0
LATERAL_JITTER_M = 0.15
ALONG_JITTER_M = 0.1
YAW_JITTER_RAD = 0.02
MIN_ROAD_RADIUS_M = 50.0
DAY_START_US = 9 * 3600 * 10**6


@dataclass(frozen=True)
class SynthParams:
    seed: int = config.DEFAULT_SEED
    num_scenes: int = 8
    samples_per_scene: int = 80
    period_s: float = config.SAMPLE_PERIOD_S
    step_m: float = 2.5
    num_landmarks: Optional[int] = None
    landmark_spacing_m: float = 8.0
    palette: Tuple[Tuple[int, int, int], ...] = DEFAULT_PALETTE
    revisit_rate: float = 0.5
    start_date: date = date(2018, 7, 1)
    scene_spacing_days: int = 30
    num_cameras: int = config.NUM_CAMERAS
    image_width: int = config.IMAGE_WIDTH
    image_height: int = config.IMAGE_HEIGHT
    gamma_days: int = config.GAMMA_DAYS
    rho_pos: float = config.RHO_POS_M

    def __post_init__(self):
        if self.num_scenes < 0 or self.samples_per_scene < 0:
            raise ArgumentError("scene and sample counts must be nonnegative")
        if not 0.0 <= self.revisit_rate <= 1.0:
            raise ArgumentError(f"revisit_rate must lie in [0, 1], got {self.revisit_rate}")
        if self.seed < 0:
            raise ArgumentError(f"seed must be nonnegative, got {self.seed}")
        if not (self.period_s > 0 and self.step_m > 0 and self.landmark_spacing_m > 0):
            raise ArgumentError("period, step and landmark spacing must be positive")
        if self.num_landmarks is not None and self.num_landmarks < 0:
            raise ArgumentError("num_landmarks must be nonnegative")
        if self.num_cameras < 1 or self.image_width < 1 or self.image_height < 1:
            raise ArgumentError("need at least one camera and a positive image size")
        palette = tuple(tuple(int(c) for c in color) for color in self.palette)
        if not palette or any(len(c) != 3 or min(c) < 0 or max(c) > 255 for c in palette):
            raise ArgumentError("palette must hold 8-bit RGB triples")
        object.__setattr__(self, "palette", palette)

    @property
    def revisit_samples(self) -> int:
        return int(math.floor(self.revisit_rate * self.samples_per_scene + 0.5))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_scenes": self.num_scenes,
            "samples_per_scene": self.samples_per_scene,
            "period_s": self.period_s,
            "step_m": self.step_m,
            "num_landmarks": self.num_landmarks,
            "landmark_spacing_m": self.landmark_spacing_m,
            "palette": [list(c) for c in self.palette],
            "revisit_rate": self.revisit_rate,
            "start_date": format_date(self.start_date),
            "scene_spacing_days": self.scene_spacing_days,
            "num_cameras": self.num_cameras,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "gamma_days": self.gamma_days,
            "rho_pos": self.rho_pos,
        }


@dataclass
class LandmarkField:
    """Vertical cylinders standing on z = 0."""
    centers: np.ndarray   # (K, 2)
    radii: np.ndarray     # (K,)
    heights: np.ndarray   # (K,)
    colors: np.ndarray    # (K, 3) uint8
    intensity: np.ndarray  # (K,)

    def __len__(self) -> int:
        return len(self.radii)

    def near(self, point, reach: float) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        d = np.hypot(self.centers[:, 0] - point[0], self.centers[:, 1] - point[1])
        return np.flatnonzero(d <= reach + self.radii)


@dataclass
class SyntheticWorld:
    params: SynthParams
    rig: CameraRig
    T_ego_lidar: Pose
    spherical: SphericalConfig
    scenes: List[Scene]
    landmarks: LandmarkField
    road_radius: float


@dataclass
class SimulatedSample:
    cloud: PointCloud
    landmark_ids: np.ndarray
    images: List[np.ndarray] = field(default_factory=list)


# ── Rig ──────────────────────────────────────────────────────────────

def lidar_extrinsic() -> Pose:
    return Pose((0.0, 0.0, LIDAR_HEIGHT_M))


def camera_rotation(yaw: float) -> np.ndarray:
    """Level camera looking along `yaw`: columns are the camera x, y, z axes in the ego frame."""
    s, c = math.sin(yaw), math.cos(yaw)
    return np.array([[s, 0.0, c], [-c, 0.0, s], [0.0, -1.0, 0.0]])


def make_rig(num_cameras: int = config.NUM_CAMERAS, width: int = config.IMAGE_WIDTH,
             height: int = config.IMAGE_HEIGHT) -> CameraRig:
    """Cameras evenly spaced in yaw, all level at CAMERA_HEIGHT_M."""
    focal = width / (2.0 * math.tan(math.radians(CAMERA_HFOV_DEG) / 2.0))
    intrinsics = CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)
    cameras = []
    for k in range(num_cameras):
        yaw = 2.0 * math.pi * k / num_cameras
        cameras.append(Camera(f"cam{k}", intrinsics,
                              Pose.from_matrix(camera_rotation(yaw), (0.0, 0.0, CAMERA_HEIGHT_M))))
    return CameraRig(tuple(cameras))


# ── Road, trajectories and landmarks ─────────────────────────────────

def _road_length(p: SynthParams) -> float:
    m = p.samples_per_scene
    return (m + max(p.num_scenes - 1, 0) * (m - p.revisit_samples)) * p.step_m


def _road_point(s: float, radius: float, lateral: float = 0.0) -> Tuple[float, float, float]:
    theta = s / radius
    r = radius + WOBBLE_AMPLITUDE_M * math.sin(2.0 * math.pi * s / WOBBLE_PERIOD_M) + lateral
    return r * math.cos(theta), r * math.sin(theta), theta + math.pi / 2.0


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def build_landmarks(p: SynthParams, radius: float, rng: np.random.Generator) -> LandmarkField:
    span = _road_length(p) + 40.0
    count = p.num_landmarks if p.num_landmarks is not None else int(math.ceil(span / p.landmark_spacing_m))
    spacing = span / count if count else 0.0
    centers, radii, heights, colors, intensity = [], [], [], [], []
    for k in range(count):
        s = -20.0 + (k + 0.5) * spacing + rng.uniform(-0.25, 0.25) * spacing
        side = 1.0 if k % 2 == 0 else -1.0
        x, y, _ = _road_point(s, radius, side * rng.uniform(5.0, 12.0))
        centers.append((x, y))
        radii.append(rng.uniform(0.4, 1.2))
        heights.append(rng.uniform(2.5, 6.0))
        colors.append(p.palette[int(rng.integers(len(p.palette)))])
        intensity.append(rng.uniform(0.2, 0.9))
    return LandmarkField(
        centers=np.array(centers, dtype=np.float64).reshape(-1, 2),
        radii=np.array(radii, dtype=np.float64),
        heights=np.array(heights, dtype=np.float64),
        colors=np.array(colors, dtype=np.uint8).reshape(-1, 3),
        intensity=np.array(intensity, dtype=np.float64),
    )


def _scene_timestamp(day: date, j: int, period_s: float) -> int:
    days = day.toordinal() - date(1970, 1, 1).toordinal()
    return days * 86400 * 10**6 + DAY_START_US + j * int(round(period_s * 10**6))


def build_world(p: SynthParams) -> SyntheticWorld:
    """Poses, scenes and landmarks; sensor data is simulated per sample on demand."""
    rng = np.random.default_rng(p.seed)
    radius = max(_road_length(p) * 1.25 / (2.0 * math.pi), MIN_ROAD_RADIUS_M)
    rig = make_rig(p.num_cameras, p.image_width, p.image_height)
    advance = (p.samples_per_scene - p.revisit_samples) * p.step_m

    scenes = []
    for i in range(p.num_scenes):
        scene_id = f"scene-{i:04d}"
        day = date.fromordinal(p.start_date.toordinal() + i * p.scene_spacing_days)
        start = i * advance
        samples = []
        for j in range(p.samples_per_scene):
            s = start + j * p.step_m + rng.uniform(-ALONG_JITTER_M, ALONG_JITTER_M)
            x, y, yaw = _road_point(s, radius, rng.uniform(-LATERAL_JITTER_M, LATERAL_JITTER_M))
            yaw = _wrap(yaw + rng.uniform(-YAW_JITTER_RAD, YAW_JITTER_RAD))
            sample_id = f"{scene_id}-{j:04d}"
            samples.append(Sample(
                id=sample_id,
                scene_id=scene_id,
                timestamp=_scene_timestamp(day, j, p.period_s),
                pose=Pose.from_yaw(yaw, (x, y, 0.0)),
                lidar_path=f"lidar/{sample_id}.bin",
                image_paths={cam.name: f"images/{sample_id}_{cam.name}.ppm" for cam in rig},
            ))
        scenes.append(Scene(scene_id, day, tuple(samples)))

    landmarks = build_landmarks(p, radius, rng)
    logger.info("synthetic world: %d scenes, road radius %.1f m, %d landmarks",
                len(scenes), radius, len(landmarks))
    return SyntheticWorld(p, rig, lidar_extrinsic(), SphericalConfig.lidar(), scenes, landmarks, radius)


# ── Sensor simulation ────────────────────────────────────────────────

def _cylinder_hits(origin: np.ndarray, dirs: np.ndarray, center, radius: float):
    """Entry distance along each ray into an infinite vertical cylinder; nan on a miss."""
    dx, dy = dirs[..., 0], dirs[..., 1]
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    a = dx * dx + dy * dy
    b = 2.0 * (dx * ox + dy * oy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (-b - np.sqrt(disc)) / (2.0 * a)
    return np.where((disc >= 0.0) & (a > 0.0) & (t > 0.0), t, np.nan)


def pixel_center_directions(cfg: SphericalConfig) -> np.ndarray:
    """(H, W, 3) unit rays through range-image pixel centers, sensor frame."""
    cols = np.arange(cfg.width)
    rows = np.arange(cfg.height)
    azimuth = math.pi * (1.0 - 2.0 * (cols + 0.5) / cfg.width)
    fov_up, fov_down = math.radians(cfg.fov_up), math.radians(cfg.fov_down)
    elevation = fov_down + (1.0 - (rows + 0.5) / cfg.height) * (fov_up - fov_down)
    el, az = np.meshgrid(elevation, azimuth, indexing="ij")
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def simulate_lidar(ego: Pose, landmarks: LandmarkField, cfg: SphericalConfig,
                   T_ego_lidar: Pose) -> Tuple[PointCloud, np.ndarray]:
    """One return per range-image pixel (nearest cylinder), in the LiDAR frame."""
    sensor = compose(ego, T_ego_lidar)
    origin = np.asarray(sensor.translation)
    local = pixel_center_directions(cfg)
    world = local @ sensor.rotation_matrix().T
    best = np.full(local.shape[:2], np.inf)
    owner = np.full(local.shape[:2], -1, dtype=np.int64)
    for k in landmarks.near(origin, cfg.r_max):
        t = _cylinder_hits(origin, world, landmarks.centers[k], landmarks.radii[k])
        z = origin[2] + t * world[..., 2]
        hit = np.isfinite(t) & (z >= 0.0) & (z <= landmarks.heights[k]) & (t < best)
        best[hit] = t[hit]
        owner[hit] = k
    rows, cols = np.nonzero(owner >= 0)
    xyz = (local[rows, cols] * best[rows, cols][:, None]).astype(np.float32).astype(np.float64)
    r = np.sqrt(np.sum(xyz * xyz, axis=1))
    keep = (r >= cfg.r_min) & (r <= cfg.r_max)
    ids = owner[rows, cols][keep]
    intensity = landmarks.intensity[ids].astype(np.float32).astype(np.float64)
    return PointCloud.from_xyz(xyz[keep], intensity), ids


def render_camera(ego: Pose, camera: Camera, landmarks: LandmarkField,
                  reach: float = config.RANGE_MAX_M + 20.0) -> np.ndarray:
    """(H, W, 3) uint8 image of a level camera: nearest cylinder per pixel over sky/ground."""
    intr = camera.intrinsics
    pose = compose(ego, camera.T_ego_cam)
    rot = pose.rotation_matrix()
    origin = np.asarray(pose.translation)
    x_c = (np.arange(intr.width) - intr.cx) / intr.fx
    y_c = (np.arange(intr.height) - intr.cy) / intr.fy
    # camera-frame rays with unit z; world height slope per unit depth
    column_dirs = np.stack([x_c, np.zeros_like(x_c), np.ones_like(x_c)], axis=-1) @ rot.T
    slope = rot[2, 0] * x_c[None, :] + rot[2, 1] * y_c[:, None] + rot[2, 2]

    image = np.empty((intr.height, intr.width, 3), dtype=np.uint8)
    image[:] = SKY_COLOR
    image[slope < 0.0] = GROUND_COLOR
    depth = np.full((intr.height, intr.width), np.inf)
    for k in landmarks.near(origin, reach):
        t = _cylinder_hits(origin, column_dirs, landmarks.centers[k], landmarks.radii[k])
        if not np.any(np.isfinite(t)):
            continue
        z = origin[2] + t[None, :] * slope
        hit = np.isfinite(t)[None, :] & (z >= 0.0) & (z <= landmarks.heights[k]) & (t[None, :] < depth)
        depth = np.where(hit, t[None, :], depth)
        image[hit] = landmarks.colors[k]
    return image


def simulate_sample(world: SyntheticWorld, sample: Sample, with_images: bool = True) -> SimulatedSample:
    cloud, ids = simulate_lidar(sample.pose, world.landmarks, world.spherical, world.T_ego_lidar)
    images = [render_camera(sample.pose, cam, world.landmarks) for cam in world.rig] if with_images else []
    return SimulatedSample(cloud, ids, images)


# ── Ground-truth self-check ──────────────────────────────────────────

def revisit_queries(scenes: Sequence[Scene], gamma: date, rho_pos: float) -> List[str]:
    """Post-gamma samples with an earlier-scene sample within rho_pos (brute-force scan)."""
    hits = []
    for i, scene in enumerate(scenes):
        if scene.date < gamma:
            continue
        earlier = np.array([s.position for prev in scenes[:i] for s in prev.samples]).reshape(-1, 2)
        if len(earlier) == 0:
            continue
        for s in scene.samples:
            dx = earlier[:, 0] - s.position[0]
            dy = earlier[:, 1] - s.position[1]
            if np.any(np.sqrt(dx * dx + dy * dy) <= rho_pos):
                hits.append(s.id)
    return hits


def verify_world(world: SyntheticWorld) -> int:
    """Count revisit queries; a revisit-enabled world with none is a generator defect."""
    p = world.params
    gamma = resolve_gamma(None, p.gamma_days, world.scenes)
    if gamma is None:
        return 0
    found = len(revisit_queries(world.scenes, gamma, p.rho_pos))
    can_revisit = any(scene.date >= gamma and i > 0 for i, scene in enumerate(world.scenes))
    if p.revisit_rate > 0 and can_revisit and found == 0:
        if p.revisit_samples == 0:
            logger.warning("revisit_rate %.2f rounds to zero revisit samples per scene", p.revisit_rate)
        else:
            raise GenerationError("no post-gamma query has ground truth; the revisit layout is broken")
    return found


# ── Writer ───────────────────────────────────────────────────────────

def generate_synthetic(p: SynthParams, out) -> DatasetManifest:
    """Build, check and write a complete dataset under `out`."""
    out = Path(out)
    world = build_world(p)
    revisits = verify_world(world)
    landmark_counts: Dict[str, int] = {}
    for scene in world.scenes:
        for sample in scene.samples:
            sim = simulate_sample(world, sample)
            write_cloud(sim.cloud, out / sample.lidar_path)
            for cam, pixels in zip(world.rig, sim.images):
                write_ppm(pixels, out / sample.image_paths[cam.name])
            landmark_counts[sample.id] = int(len(np.unique(sim.landmark_ids)))
        logger.info("wrote %s (%d samples)", scene.id, len(scene))
    manifest = DatasetManifest(
        rig=world.rig,
        T_ego_lidar=world.T_ego_lidar,
        spherical=world.spherical,
        scenes=world.scenes,
        landmark_counts=landmark_counts,
        generator=p.to_dict(),
    )
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, out)
    logger.info("synthetic dataset at %s: %d revisit queries after gamma", out, revisits)
    return manifest
