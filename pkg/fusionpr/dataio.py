"""
On-disk dataset format.

A dataset directory holds `manifest.json` plus per-sample files:
  - LiDAR clouds: b"FPR1" | u32 count | count x 4 little-endian f32 (x, y, z, intensity)
  - camera images: binary PPM (P6, maxval 255)
Paths in the manifest are relative to the dataset directory. Split files
(train.json / test.json) are plain JSON written through serialization.dump_json.
"""
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from fusionpr import config
from fusionpr.benchmark import (
    BenchmarkSplit,
    GroundTruthEntry,
    SCHEMES,
    Sample,
    Scene,
    TrainingTuple,
)
from fusionpr.errors import FormatError, FprError, UnsupportedVersionError
from fusionpr.geometry import CameraIntrinsics, PointCloud, Pose, SphericalConfig
from fusionpr.interaction import Camera, CameraRig, Image
from fusionpr.serialization import dump_json, format_date, load_json, parse_date

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TRAIN_SPLIT_NAME = "train.json"
TEST_SPLIT_NAME = "test.json"

CLOUD_MAGIC = b"FPR1"
CLOUD_COUNT = struct.Struct("<I")
CLOUD_HEADER_SIZE = len(CLOUD_MAGIC) + CLOUD_COUNT.size
PPM_MAGIC = b"P6"


# ── Point cloud files ────────────────────────────────────────────────

def encode_cloud(cloud: PointCloud) -> bytes:
    return CLOUD_MAGIC + CLOUD_COUNT.pack(len(cloud)) + cloud.points.astype("<f4").tobytes()


def decode_cloud(data: bytes, path=None) -> PointCloud:
    for i, expected in enumerate(CLOUD_MAGIC):
        if i >= len(data) or data[i] != expected:
            raise FormatError("bad point cloud magic", path=path, offset=i)
    if len(data) < CLOUD_HEADER_SIZE:
        raise FormatError(f"truncated header: expected {CLOUD_HEADER_SIZE} bytes, found {len(data)}",
                          path=path, offset=len(data))
    (count,) = CLOUD_COUNT.unpack_from(data, len(CLOUD_MAGIC))
    expected_size = CLOUD_HEADER_SIZE + 16 * count
    if len(data) != expected_size:
        raise FormatError(f"expected {expected_size} bytes for {count} points, found {len(data)}",
                          path=path, offset=min(len(data), expected_size))
    points = np.frombuffer(data, dtype="<f4", offset=CLOUD_HEADER_SIZE).reshape(count, 4)
    try:
        return PointCloud(points.astype(np.float64))
    except FprError as e:
        raise FormatError(str(e), path=path, offset=CLOUD_HEADER_SIZE)


def write_cloud(cloud: PointCloud, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_cloud(cloud))


def read_cloud(path) -> PointCloud:
    path = Path(path)
    return decode_cloud(path.read_bytes(), path=path)


# ── PPM images ───────────────────────────────────────────────────────

def encode_ppm(pixels) -> bytes:
    px = np.asarray(pixels, dtype=np.uint8)
    if px.ndim != 3 or px.shape[2] != 3:
        raise FormatError(f"PPM pixels must be (H, W, 3), got {px.shape}")
    height, width = px.shape[:2]
    return b"P6\n%d %d\n255\n" % (width, height) + px.tobytes()


def decode_ppm(data: bytes, path=None) -> np.ndarray:
    for i, expected in enumerate(PPM_MAGIC):
        if i >= len(data) or data[i] != expected:
            raise FormatError("bad PPM magic", path=path, offset=i)
    pos = len(PPM_MAGIC)
    tokens: List[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PPM header", path=path, offset=pos)
        tokens.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("malformed PPM header", path=path, offset=pos)
    pos += 1
    width, height, maxval = tokens
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM is supported, maxval is {maxval}", path=path, offset=pos - 1)
    expected = width * height * 3
    if len(data) - pos != expected:
        raise FormatError(f"expected {expected} pixel bytes, found {len(data) - pos}", path=path, offset=pos)
    return np.frombuffer(data, dtype=np.uint8, offset=pos).reshape(height, width, 3).copy()


def write_ppm(pixels, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(pixels))


def read_ppm(path) -> np.ndarray:
    path = Path(path)
    return decode_ppm(path.read_bytes(), path=path)


def write_image(image: Image, path) -> None:
    write_ppm(image.to_uint8(), path)


def read_image(path) -> Image:
    return Image.from_uint8(read_ppm(path))


# ── Manifest ─────────────────────────────────────────────────────────

def _require(obj, key: str, field_path: str, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"missing field {key!r}", path=path, field=field_path)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise FormatError(f"field {key!r} has the wrong type", path=path, field=field_path)
    return value


def _pose_from(obj, field_path: str, path) -> Pose:
    translation = _require(obj, "translation", f"{field_path}.translation", path, list)
    rotation = _require(obj, "rotation", f"{field_path}.rotation", path, list)
    try:
        return Pose(tuple(translation), tuple(rotation))
    except (FprError, TypeError, ValueError) as e:
        raise FormatError(str(e), path=path, field=field_path)


@dataclass
class DatasetManifest:
    rig: CameraRig
    T_ego_lidar: Pose
    spherical: SphericalConfig
    scenes: List[Scene]
    format_version: int = config.FORMAT_VERSION
    landmark_counts: Dict[str, int] = field(default_factory=dict)
    generator: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        cameras = [{
            "name": cam.name,
            "intrinsics": cam.intrinsics.to_dict(),
            "T_ego_cam": cam.T_ego_cam.to_dict(),
        } for cam in self.rig]
        scenes = []
        for scene in self.scenes:
            samples = []
            for s in scene.samples:
                record = {
                    "id": s.id,
                    "timestamp": s.timestamp,
                    "pose": s.pose.to_dict(),
                    "lidar": s.lidar_path,
                    "images": dict(s.image_paths),
                }
                if s.id in self.landmark_counts:
                    record["landmarks"] = self.landmark_counts[s.id]
                samples.append(record)
            scenes.append({"id": scene.id, "date": format_date(scene.date), "samples": samples})
        data = {
            "format_version": self.format_version,
            "rig": {"cameras": cameras},
            "lidar": {"T_ego_lidar": self.T_ego_lidar.to_dict(), "spherical": self.spherical.to_dict()},
            "scenes": scenes,
        }
        if self.generator:
            data["generator"] = self.generator
        return data

    @classmethod
    def from_dict(cls, data, path=None) -> "DatasetManifest":
        version = _require(data, "format_version", "format_version", path, int)
        if version != config.FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"unsupported format_version {version} (supported: {config.FORMAT_VERSION})",
                path=path, field="format_version")

        rig_obj = _require(data, "rig", "rig", path, dict)
        cameras = []
        for i, cam in enumerate(_require(rig_obj, "cameras", "rig.cameras", path, list)):
            where = f"rig.cameras[{i}]"
            intr = _require(cam, "intrinsics", f"{where}.intrinsics", path, dict)
            try:
                intrinsics = CameraIntrinsics(**intr)
            except (FprError, TypeError) as e:
                raise FormatError(str(e), path=path, field=f"{where}.intrinsics")
            cameras.append(Camera(_require(cam, "name", f"{where}.name", path, str), intrinsics,
                                  _pose_from(_require(cam, "T_ego_cam", f"{where}.T_ego_cam", path, dict),
                                             f"{where}.T_ego_cam", path)))
        try:
            rig = CameraRig(tuple(cameras))
        except FprError as e:
            raise FormatError(str(e), path=path, field="rig.cameras")

        lidar = _require(data, "lidar", "lidar", path, dict)
        T_ego_lidar = _pose_from(_require(lidar, "T_ego_lidar", "lidar.T_ego_lidar", path, dict),
                                 "lidar.T_ego_lidar", path)
        try:
            spherical = SphericalConfig(**_require(lidar, "spherical", "lidar.spherical", path, dict))
        except (FprError, TypeError) as e:
            raise FormatError(str(e), path=path, field="lidar.spherical")

        scenes = []
        landmark_counts = {}
        seen_ids = set()
        for i, scene_obj in enumerate(_require(data, "scenes", "scenes", path, list)):
            where = f"scenes[{i}]"
            scene_id = _require(scene_obj, "id", f"{where}.id", path, str)
            scene_date = parse_date(_require(scene_obj, "date", f"{where}.date", path, str), field=f"{where}.date")
            samples = []
            for j, rec in enumerate(_require(scene_obj, "samples", f"{where}.samples", path, list)):
                at = f"{where}.samples[{j}]"
                sample_id = _require(rec, "id", f"{at}.id", path, str)
                if sample_id in seen_ids:
                    raise FormatError(f"duplicate sample id {sample_id!r}", path=path, field=f"{at}.id")
                seen_ids.add(sample_id)
                images = _require(rec, "images", f"{at}.images", path, dict)
                for name in rig.names:
                    if name not in images:
                        raise FormatError(f"no image for camera {name!r}", path=path, field=f"{at}.images")
                timestamp = _require(rec, "timestamp", f"{at}.timestamp", path, int)
                samples.append(Sample(
                    id=sample_id,
                    scene_id=scene_id,
                    timestamp=timestamp,
                    pose=_pose_from(_require(rec, "pose", f"{at}.pose", path, dict), f"{at}.pose", path),
                    lidar_path=_require(rec, "lidar", f"{at}.lidar", path, str),
                    image_paths={name: str(images[name]) for name in rig.names},
                ))
                if "landmarks" in rec:
                    landmark_counts[sample_id] = int(rec["landmarks"])
            try:
                scenes.append(Scene(scene_id, scene_date, tuple(samples)))
            except FprError as e:
                raise FormatError(str(e), path=path, field=f"{where}.samples")

        return cls(rig=rig, T_ego_lidar=T_ego_lidar, spherical=spherical, scenes=scenes,
                   format_version=version, landmark_counts=landmark_counts,
                   generator=dict(data.get("generator") or {}))


def write_manifest(manifest: DatasetManifest, root) -> Path:
    path = Path(root) / MANIFEST_NAME
    dump_json(manifest.to_dict(), path)
    return path


# ── Datasets ─────────────────────────────────────────────────────────

@dataclass
class LoadedSample:
    sample: Sample
    cloud: PointCloud
    images: List[Image]

    @property
    def pose(self) -> Pose:
        return self.sample.pose


class Dataset:
    """A manifest plus its directory; sample files are read on demand."""

    def __init__(self, root, manifest: DatasetManifest):
        self.root = Path(root)
        self.manifest = manifest
        self._samples: Dict[str, Tuple[Sample, Scene]] = {
            s.id: (s, scene) for scene in manifest.scenes for s in scene.samples
        }

    @property
    def rig(self) -> CameraRig:
        return self.manifest.rig

    @property
    def T_ego_lidar(self) -> Pose:
        return self.manifest.T_ego_lidar

    @property
    def spherical(self) -> SphericalConfig:
        return self.manifest.spherical

    @property
    def scenes(self) -> List[Scene]:
        return self.manifest.scenes

    @property
    def sample_ids(self) -> List[str]:
        return list(self._samples)

    def __len__(self) -> int:
        return len(self._samples)

    def __contains__(self, sample_id) -> bool:
        return sample_id in self._samples

    def sample(self, sample_id: str) -> Sample:
        try:
            return self._samples[sample_id][0]
        except KeyError:
            raise FormatError(f"unknown sample id {sample_id!r}", path=self.root / MANIFEST_NAME)

    def check_files(self) -> None:
        """Every referenced file must exist."""
        for scene_idx, scene in enumerate(self.scenes):
            for sample_idx, s in enumerate(scene.samples):
                where = f"scenes[{scene_idx}].samples[{sample_idx}]"
                if not (self.root / s.lidar_path).is_file():
                    raise FormatError(f"missing file {s.lidar_path}", path=self.root / MANIFEST_NAME,
                                      field=f"{where}.lidar")
                for name, rel in s.image_paths.items():
                    if not (self.root / rel).is_file():
                        raise FormatError(f"missing file {rel}", path=self.root / MANIFEST_NAME,
                                          field=f"{where}.images.{name}")

    def load_sample(self, sample_id: str) -> LoadedSample:
        s = self.sample(sample_id)
        cloud = read_cloud(self.root / s.lidar_path)
        images = [read_image(self.root / s.image_paths[name]) for name in self.rig.names]
        return LoadedSample(s, cloud, images)

    def sample_frame(self) -> pd.DataFrame:
        rows = []
        for scene in self.scenes:
            for s in scene.samples:
                x, y = s.position
                rows.append({
                    "id": s.id,
                    "scene": scene.id,
                    "date": format_date(scene.date),
                    "timestamp": s.timestamp,
                    "x": x,
                    "y": y,
                    "landmarks": self.manifest.landmark_counts.get(s.id),
                })
        return pd.DataFrame(rows, columns=["id", "scene", "date", "timestamp", "x", "y", "landmarks"])


def load_dataset(path, check_files: bool = True) -> Dataset:
    """Open a dataset directory (or its manifest.json)."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    manifest = DatasetManifest.from_dict(load_json(manifest_path), path=manifest_path)
    dataset = Dataset(manifest_path.parent, manifest)
    if check_files:
        dataset.check_files()
    logger.info("loaded dataset %s: %d scenes, %d samples", manifest_path.parent,
                len(dataset.scenes), len(dataset))
    return dataset


# ── Split files ──────────────────────────────────────────────────────

@dataclass
class TrainSplitFile:
    scheme: str
    params: dict
    tuples: List[TrainingTuple]
    negative_buffers: Dict[str, List[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = {"scheme": self.scheme, "params": self.params, "tuples": [t.to_dict() for t in self.tuples]}
        if self.negative_buffers:
            data["negative_buffers"] = self.negative_buffers
        return data

    def tuple_for(self, query_id: str) -> TrainingTuple:
        for t in self.tuples:
            if t.query_id == query_id:
                return t
        raise FormatError(f"no training tuple for query {query_id!r}")


@dataclass
class TestSplitFile:
    scheme: str
    params: dict
    database: List[str]
    entries: List[GroundTruthEntry]
    validation: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "params": self.params,
            "database": list(self.database),
            "queries": [e.to_dict() for e in self.entries],
            "validation": list(self.validation),
        }


def split_files(split: BenchmarkSplit) -> Tuple[TrainSplitFile, TestSplitFile]:
    train = TrainSplitFile(split.scheme, split.params, split.tuples, split.negative_buffers)
    test = TestSplitFile(split.scheme, split.params, split.database_ids, split.test_entries, split.validation_ids)
    return train, test


def write_split(split: BenchmarkSplit, out_dir) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    train, test = split_files(split)
    train_path, test_path = out_dir / TRAIN_SPLIT_NAME, out_dir / TEST_SPLIT_NAME
    dump_json(train.to_dict(), train_path)
    dump_json(test.to_dict(), test_path)
    return train_path, test_path


def _id_list(value, field_path: str, path) -> List[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise FormatError("expected a list of ids", path=path, field=field_path)
    return list(value)


def _scheme(data, path) -> str:
    scheme = _require(data, "scheme", "scheme", path, str)
    if scheme not in SCHEMES:
        raise FormatError(f"unknown scheme {scheme!r}", path=path, field="scheme")
    return scheme


def read_train_split(path) -> TrainSplitFile:
    path = Path(path)
    data = load_json(path)
    tuples = []
    for i, obj in enumerate(_require(data, "tuples", "tuples", path, list)):
        where = f"tuples[{i}]"
        tuples.append(TrainingTuple(
            _require(obj, "query", f"{where}.query", path, str),
            tuple(_id_list(_require(obj, "positives", f"{where}.positives", path), f"{where}.positives", path)),
            tuple(_id_list(_require(obj, "negatives", f"{where}.negatives", path), f"{where}.negatives", path)),
        ))
    buffers = data.get("negative_buffers") or {}
    return TrainSplitFile(_scheme(data, path), _require(data, "params", "params", path, dict), tuples,
                          {k: _id_list(v, f"negative_buffers.{k}", path) for k, v in buffers.items()})


def read_test_split(path) -> TestSplitFile:
    path = Path(path)
    data = load_json(path)
    entries = []
    for i, obj in enumerate(_require(data, "queries", "queries", path, list)):
        where = f"queries[{i}]"
        entries.append(GroundTruthEntry(
            _require(obj, "query", f"{where}.query", path, str),
            tuple(_id_list(_require(obj, "gt", f"{where}.gt", path), f"{where}.gt", path)),
        ))
    return TestSplitFile(
        scheme=_scheme(data, path),
        params=_require(data, "params", "params", path, dict),
        database=_id_list(_require(data, "database", "database", path), "database", path),
        entries=entries,
        validation=_id_list(data.get("validation", []), "validation", path),
    )


def resolve_split_paths(path) -> Tuple[Optional[Path], Optional[Path]]:
    """Accept a split directory or one of its files; returns (train, test) paths."""
    path = Path(path)
    if path.is_dir():
        return path / TRAIN_SPLIT_NAME, path / TEST_SPLIT_NAME
    if path.name == TRAIN_SPLIT_NAME:
        return path, path.with_name(TEST_SPLIT_NAME)
    if path.name == TEST_SPLIT_NAME:
        return path.with_name(TRAIN_SPLIT_NAME), path
    return path, path
