"""
Unit tests for fusionpr/dataio.py -- cloud and PPM codecs, manifest
validation, dataset loading and split files.
"""
import copy
import os
import struct
import sys
import pytest
from datetime import date

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from __mocks__.fixtures import make_entry, make_pose, make_rig, make_spherical
from fusionpr import dataio
from fusionpr.benchmark import BenchmarkSplit, Sample, Scene, TrainingTuple
from fusionpr.dataio import (
    CLOUD_MAGIC,
    DatasetManifest,
    decode_cloud,
    decode_ppm,
    encode_cloud,
    encode_ppm,
    load_dataset,
    read_test_split,
    read_train_split,
    resolve_split_paths,
    write_cloud,
    write_image,
    write_manifest,
    write_split,
)
from fusionpr.errors import FormatError, UnsupportedVersionError
from fusionpr.geometry import PointCloud, Pose
from fusionpr.interaction import Image

pytestmark = pytest.mark.unit


def f32_cloud(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(-20, 20, size=(n, 4)).astype(np.float32))


def small_manifest(n_scenes=2, n_samples=3):
    rig = make_rig((0.0, 3.14159))
    scenes = []
    for k in range(n_scenes):
        samples = []
        for j in range(n_samples):
            sid = f"scene-{k}-{j}"
            samples.append(Sample(sid, f"scene-{k}", j * 500_000, make_pose(2.0 * j, 0.1 * k),
                                  f"lidar/{sid}.bin", {name: f"images/{sid}_{name}.ppm" for name in rig.names}))
        scenes.append(Scene(f"scene-{k}", date(2018, 7, 1 + k), tuple(samples)))
    return DatasetManifest(rig, Pose((0.0, 0.0, 1.84)), make_spherical(), scenes,
                           landmark_counts={"scene-0-0": 4})


def write_dataset(root, manifest):
    for scene in manifest.scenes:
        for j, s in enumerate(scene.samples):
            write_cloud(f32_cloud(seed=j), root / s.lidar_path)
            for cam in manifest.rig:
                write_image(Image(np.full((cam.intrinsics.height, cam.intrinsics.width, 3), 0.5)),
                            root / s.image_paths[cam.name])
    write_manifest(manifest, root)
    return root


# ── Point cloud codec ────────────────────────────────────────────────

class TestCloudCodec:
    def test_round_trip(self):
        cloud = f32_cloud(50)
        assert decode_cloud(encode_cloud(cloud)) == cloud

    def test_empty_cloud(self):
        data = encode_cloud(PointCloud())
        assert data == CLOUD_MAGIC + struct.pack("<I", 0)
        assert len(decode_cloud(data)) == 0

    @pytest.mark.parametrize("index", [0, 1, 2, 3])
    def test_corrupted_magic_names_offset(self, index):
        data = bytearray(encode_cloud(f32_cloud()))
        data[index] ^= 0x20
        with pytest.raises(FormatError) as exc:
            decode_cloud(bytes(data))
        assert exc.value.offset == index

    def test_truncated_body(self):
        data = encode_cloud(f32_cloud(3))
        with pytest.raises(FormatError) as exc:
            decode_cloud(data[:-2])
        assert "expected 56 bytes for 3 points, found 54" in str(exc.value)

    def test_truncated_header(self):
        with pytest.raises(FormatError):
            decode_cloud(CLOUD_MAGIC + b"\x01")

    def test_non_finite_points(self):
        data = CLOUD_MAGIC + struct.pack("<I", 1) + np.array([np.nan, 0, 0, 0], dtype="<f4").tobytes()
        with pytest.raises(FormatError):
            decode_cloud(data)


# ── PPM codec ────────────────────────────────────────────────────────

class TestPpmCodec:
    def test_round_trip(self, rng):
        px = rng.integers(0, 256, size=(7, 5, 3), dtype=np.uint8)
        assert np.array_equal(decode_ppm(encode_ppm(px)), px)

    def test_header(self):
        assert encode_ppm(np.zeros((2, 3, 3), dtype=np.uint8)).startswith(b"P6\n3 2\n255\n")

    def test_comment_in_header(self):
        data = b"P6\n# made by hand\n1 1\n255\n" + bytes([1, 2, 3])
        assert decode_ppm(data).tolist() == [[[1, 2, 3]]]

    def test_sixteen_bit_rejected(self):
        with pytest.raises(FormatError):
            decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))

    def test_short_pixel_data(self):
        with pytest.raises(FormatError):
            decode_ppm(b"P6\n2 2\n255\n" + bytes(11))

    def test_bad_magic(self):
        with pytest.raises(FormatError) as exc:
            decode_ppm(b"P3\n1 1\n255\n" + bytes(3))
        assert exc.value.offset == 1


# ── Manifest ─────────────────────────────────────────────────────────

class TestManifest:
    def test_round_trip(self):
        data = small_manifest().to_dict()
        assert DatasetManifest.from_dict(data).to_dict() == data

    def test_landmark_counts_optional(self):
        data = small_manifest().to_dict()
        samples = data["scenes"][0]["samples"]
        assert samples[0]["landmarks"] == 4
        assert "landmarks" not in samples[1]

    def test_unsupported_version(self):
        data = small_manifest().to_dict()
        data["format_version"] = 99
        with pytest.raises(UnsupportedVersionError) as exc:
            DatasetManifest.from_dict(data)
        assert exc.value.field == "format_version"

    def test_missing_field_is_named(self):
        data = small_manifest().to_dict()
        del data["scenes"][1]["samples"][2]["pose"]
        with pytest.raises(FormatError) as exc:
            DatasetManifest.from_dict(data)
        assert exc.value.field == "scenes[1].samples[2].pose"

    def test_bad_quaternion(self):
        data = small_manifest().to_dict()
        data["lidar"]["T_ego_lidar"]["rotation"] = [2.0, 0.0, 0.0, 0.0]
        with pytest.raises(FormatError) as exc:
            DatasetManifest.from_dict(data)
        assert exc.value.field == "lidar.T_ego_lidar"

    def test_duplicate_sample_ids(self):
        data = small_manifest().to_dict()
        data["scenes"][1]["samples"][0]["id"] = "scene-0-0"
        with pytest.raises(FormatError):
            DatasetManifest.from_dict(data)

    def test_missing_camera_image(self):
        data = small_manifest().to_dict()
        del data["scenes"][0]["samples"][0]["images"]["cam1"]
        with pytest.raises(FormatError) as exc:
            DatasetManifest.from_dict(data)
        assert exc.value.field == "scenes[0].samples[0].images"

    def test_bad_date(self):
        data = small_manifest().to_dict()
        data["scenes"][0]["date"] = "July 1st"
        with pytest.raises(FormatError):
            DatasetManifest.from_dict(data)

    def test_wrong_type(self):
        data = copy.deepcopy(small_manifest().to_dict())
        data["scenes"][0]["samples"][0]["timestamp"] = "noon"
        with pytest.raises(FormatError):
            DatasetManifest.from_dict(data)


# ── Dataset loading ──────────────────────────────────────────────────

class TestLoadDataset:
    def test_load_and_read_sample(self, tmp_path):
        write_dataset(tmp_path, small_manifest())
        ds = load_dataset(tmp_path)
        assert len(ds) == 6
        loaded = ds.load_sample("scene-1-2")
        assert loaded.cloud == f32_cloud(seed=2)
        assert len(loaded.images) == 2
        assert loaded.pose.translation[0] == 4.0

    def test_manifest_path_accepted(self, tmp_path):
        write_dataset(tmp_path, small_manifest())
        assert len(load_dataset(tmp_path / "manifest.json")) == 6

    def test_missing_file(self, tmp_path):
        write_dataset(tmp_path, small_manifest())
        (tmp_path / "lidar" / "scene-0-1.bin").unlink()
        with pytest.raises(FormatError) as exc:
            load_dataset(tmp_path)
        assert exc.value.field == "scenes[0].samples[1].lidar"
        assert len(load_dataset(tmp_path, check_files=False)) == 6

    def test_unknown_sample(self, tmp_path):
        write_dataset(tmp_path, small_manifest())
        with pytest.raises(FormatError):
            load_dataset(tmp_path).sample("nope")

    def test_sample_frame(self, tmp_path):
        write_dataset(tmp_path, small_manifest())
        frame = load_dataset(tmp_path).sample_frame()
        assert list(frame.columns) == ["id", "scene", "date", "timestamp", "x", "y", "landmarks"]
        assert len(frame) == 6
        assert frame.loc[frame["id"] == "scene-0-0", "landmarks"].iloc[0] == 4

    def test_empty_scenes(self, tmp_path):
        manifest = small_manifest(n_scenes=2, n_samples=0)
        write_manifest(manifest, tmp_path)
        ds = load_dataset(tmp_path)
        assert len(ds) == 0 and len(ds.scenes) == 2


# ── Split files ──────────────────────────────────────────────────────

class TestSplitFiles:
    def split(self, buffers=None):
        return BenchmarkSplit(
            scheme="self-supervised" if buffers else "supervised",
            params={"seed": 0, "gamma": "2018-10-14"},
            database_ids=["a", "b"],
            tuples=[TrainingTuple("q", ("a",), ("b", "c", "d", "e"))],
            test_entries=[make_entry("t1", ["a"]), make_entry("t2")],
            validation_ids=["t2"],
            negative_buffers=buffers or {},
        )

    def test_round_trip(self, tmp_path):
        train_path, test_path = write_split(self.split(), tmp_path)
        train = read_train_split(train_path)
        test = read_test_split(test_path)
        assert train.tuples == self.split().tuples
        assert train.tuple_for("q").negative_ids == ("b", "c", "d", "e")
        assert test.database == ["a", "b"]
        assert test.entries == self.split().test_entries
        assert test.validation == ["t2"]
        assert isinstance(test, dataio.TestSplitFile)

    def test_test_file_keys(self, tmp_path):
        _, test_path = write_split(self.split(), tmp_path)
        assert set(dataio.load_json(test_path)) == {"scheme", "params", "database", "queries", "validation"}

    def test_negative_buffers_only_when_present(self, tmp_path):
        train_path, _ = write_split(self.split(), tmp_path / "sup")
        assert "negative_buffers" not in dataio.load_json(train_path)
        train_path, _ = write_split(self.split({"s": ["a", "a"]}), tmp_path / "self")
        assert read_train_split(train_path).negative_buffers == {"s": ["a", "a"]}

    def test_identical_inputs_identical_bytes(self, tmp_path):
        a = write_split(self.split(), tmp_path / "a")
        b = write_split(self.split(), tmp_path / "b")
        assert a[0].read_bytes() == b[0].read_bytes()
        assert a[1].read_bytes() == b[1].read_bytes()

    def test_unknown_scheme(self, tmp_path):
        train_path, _ = write_split(self.split(), tmp_path)
        train_path.write_text('{"scheme": "other", "params": {}, "tuples": []}', encoding="utf-8")
        with pytest.raises(FormatError):
            read_train_split(train_path)

    def test_unknown_tuple(self, tmp_path):
        train_path, _ = write_split(self.split(), tmp_path)
        with pytest.raises(FormatError):
            read_train_split(train_path).tuple_for("missing")

    def test_resolve_split_paths(self, tmp_path):
        assert resolve_split_paths(tmp_path) == (tmp_path / "train.json", tmp_path / "test.json")
        assert resolve_split_paths(tmp_path / "test.json") == (tmp_path / "train.json", tmp_path / "test.json")
