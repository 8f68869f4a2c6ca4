"""
Unit tests for fusionpr/descriptor.py -- the baseline descriptor, descriptor
sets and the binary descriptor file format.
"""
import os
import struct
import sys
import pytest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from __mocks__.fixtures import make_descriptor_set, make_range_image, make_spherical
from fusionpr.descriptor import (
    DESCRIPTOR_MAGIC,
    DescriptorConfig,
    DescriptorSet,
    decode_descriptors,
    encode_descriptors,
    export_descriptors,
    extract_baseline,
    import_descriptors,
)
from fusionpr.errors import ArgumentError, DescriptorLookupError, FormatError, ShapeError
from fusionpr.geometry import RangeImage

pytestmark = pytest.mark.unit


def lidar_grid(width=64):
    return make_spherical(width=width, height=32)


# ── DescriptorConfig ─────────────────────────────────────────────────

class TestDescriptorConfig:
    def test_defaults(self):
        cfg = DescriptorConfig()
        assert (cfg.dim, cfg.rows, cfg.range_bins) == (256, 32, 8)

    def test_rows_times_bins_must_match_dim(self):
        with pytest.raises(ArgumentError):
            DescriptorConfig(dim=256, rows=32, range_bins=4)

    def test_color_needs_even_bins(self):
        with pytest.raises(ArgumentError):
            DescriptorConfig(dim=96, rows=32, range_bins=3, use_color=True)

    def test_color_bin_split(self):
        cfg = DescriptorConfig(use_color=True)
        assert (cfg.geometric_bins, cfg.hue_bins) == (4, 4)

    def test_log_spaced_edges(self):
        edges = DescriptorConfig().bin_edges()
        assert len(edges) == 9
        assert edges[0] == pytest.approx(1.0) and edges[-1] == pytest.approx(80.0)
        np.testing.assert_allclose(edges[1:] / edges[:-1], 80.0 ** (1 / 8))


# ── extract_baseline ─────────────────────────────────────────────────

class TestExtractBaseline:
    def test_all_invalid_is_zero(self):
        vec = extract_baseline(RangeImage.empty(lidar_grid()))
        assert vec.shape == (256,)
        assert vec.dtype == np.float32
        assert not vec.any()

    def test_single_row_single_bin(self):
        data = np.zeros((1, 32, 64), dtype=np.float32)
        data[0, 0, :10] = 6.0
        vec = extract_baseline(RangeImage(data))
        assert vec[3] == 1.0
        assert np.count_nonzero(vec) == 1

    def test_unit_norm(self):
        for seed in range(10):
            vec = extract_baseline(make_range_image(lidar_grid(), seed=seed))
            assert np.linalg.norm(vec.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)
            assert (vec >= 0).all()

    def test_column_shift_invariance(self, rng):
        cfg = lidar_grid()
        for seed in range(100):
            img = make_range_image(cfg, fill=0.5, seed=seed)
            k = int(rng.integers(1, cfg.width))
            assert np.array_equal(extract_baseline(img), extract_baseline(img.shift_columns(k)))

    def test_column_shift_invariance_with_color(self, rng):
        cfg = lidar_grid()
        dcfg = DescriptorConfig(use_color=True)
        for seed in range(20):
            img = make_range_image(cfg, fill=0.5, seed=seed, channels=4)
            k = int(rng.integers(1, cfg.width))
            assert np.array_equal(extract_baseline(img, dcfg), extract_baseline(img.shift_columns(k), dcfg))

    def test_hue_slots(self):
        data = np.zeros((4, 32, 64), dtype=np.float32)
        data[0, 0, 0:3] = 2.0
        data[1, 0, 0] = 1.0  # red
        data[2, 0, 1] = 1.0  # green
        data[3, 0, 2] = 1.0  # blue
        vec = extract_baseline(RangeImage(data), DescriptorConfig(use_color=True))
        geo = vec[0:4]
        hue = vec[4:8]
        assert np.count_nonzero(geo) == 1
        assert np.count_nonzero(hue[[0, 1, 2]]) == 3
        assert hue[3] == 0.0

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            extract_baseline(RangeImage.empty(make_spherical(64, 16)))

    def test_color_needs_four_channels(self):
        with pytest.raises(ShapeError):
            extract_baseline(RangeImage.empty(lidar_grid()), DescriptorConfig(use_color=True))


# ── DescriptorSet ────────────────────────────────────────────────────

class TestDescriptorSet:
    def test_lookup(self):
        ds = make_descriptor_set(3)
        assert "d001" in ds
        assert ds.get("d001").shape == (8,)

    def test_missing_id(self):
        with pytest.raises(DescriptorLookupError) as exc:
            make_descriptor_set(3).get("nope")
        assert "nope" in str(exc.value)

    def test_duplicate_ids(self):
        with pytest.raises(ArgumentError):
            DescriptorSet(["a", "a"], np.zeros((2, 4)))

    def test_non_finite(self):
        with pytest.raises(ArgumentError):
            DescriptorSet(["a"], [[np.inf, 0.0]])

    def test_from_mapping_keeps_order(self):
        ds = DescriptorSet.from_mapping({"b": np.ones(4), "a": np.zeros(4)})
        assert ds.ids == ["b", "a"]
        assert ds.dim == 4

    def test_empty_mapping(self):
        assert len(DescriptorSet.from_mapping({}, dim=16)) == 0


# ── Descriptor file format ───────────────────────────────────────────

class TestDescriptorFile:
    def test_empty_file_size(self):
        data = encode_descriptors(DescriptorSet([], np.zeros((0, 256)), dim=256))
        assert data == DESCRIPTOR_MAGIC + struct.pack("<II", 0, 256)
        assert len(data) == 12

    def test_record_layout(self):
        ids = ["a", "bb", "ccc"]
        ds = DescriptorSet(ids, np.arange(3 * 256, dtype=np.float32).reshape(3, 256), dim=256)
        data = encode_descriptors(ds)
        assert len(data) == 12 + 3 * 2 + 6 + 3 * 256 * 4
        assert data[12:14] == struct.pack("<H", 1)
        assert data[14:15] == b"a"
        assert struct.unpack_from("<f", data, 15)[0] == 0.0

    def test_round_trip(self):
        ds = make_descriptor_set(20, dim=32, seed=4)
        assert decode_descriptors(encode_descriptors(ds)) == ds

    def test_file_round_trip(self, tmp_path):
        ds = make_descriptor_set(5, dim=16)
        path = tmp_path / "out" / "desc.fprd"
        export_descriptors(ds, path)
        assert import_descriptors(path) == ds

    def test_unicode_ids(self):
        ds = DescriptorSet(["scène-é", "場所"], np.ones((2, 4)), dim=4)
        assert decode_descriptors(encode_descriptors(ds)) == ds

    @pytest.mark.parametrize("index", [0, 1, 2, 3])
    def test_corrupted_magic(self, index):
        data = bytearray(encode_descriptors(make_descriptor_set(2)))
        data[index] ^= 0xFF
        with pytest.raises(FormatError) as exc:
            decode_descriptors(bytes(data), path="x.fprd")
        assert exc.value.offset == 0

    def test_truncated_header(self):
        with pytest.raises(FormatError) as exc:
            decode_descriptors(DESCRIPTOR_MAGIC + b"\x01\x00")
        assert exc.value.offset == 4

    def test_truncated_record(self):
        data = encode_descriptors(make_descriptor_set(3, dim=8))
        with pytest.raises(FormatError) as exc:
            decode_descriptors(data[:-1])
        record = 2 + 4 + 8 * 4
        assert exc.value.offset == 12 + 2 * record

    def test_count_exceeds_records(self):
        data = bytearray(encode_descriptors(make_descriptor_set(2, dim=8)))
        data[4:8] = struct.pack("<I", 3)
        with pytest.raises(FormatError):
            decode_descriptors(bytes(data))

    def test_trailing_bytes(self):
        data = encode_descriptors(make_descriptor_set(2, dim=8)) + b"\x00"
        with pytest.raises(FormatError) as exc:
            decode_descriptors(data)
        assert exc.value.offset == len(data) - 1

    def test_duplicate_ids_in_file(self):
        rec = struct.pack("<H", 1) + b"a" + np.zeros(2, dtype="<f4").tobytes()
        data = DESCRIPTOR_MAGIC + struct.pack("<II", 2, 2) + rec + rec
        with pytest.raises(FormatError) as exc:
            decode_descriptors(data)
        assert exc.value.offset == 12 + len(rec)

    def test_bad_utf8_id(self):
        rec = struct.pack("<H", 1) + b"\xff" + np.zeros(2, dtype="<f4").tobytes()
        with pytest.raises(FormatError):
            decode_descriptors(DESCRIPTOR_MAGIC + struct.pack("<II", 1, 2) + rec)
