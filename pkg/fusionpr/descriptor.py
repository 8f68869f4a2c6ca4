"""
Baseline place descriptors and the descriptor file format.

The baseline is a per-row histogram of valid ranges over log-spaced bins,
flattened row-major and L2-normalized. Rows ignore azimuth, so any circular
column shift leaves the descriptor unchanged bit for bit.

File layout (little-endian):
    b"FPRD" | u32 count | u32 dim | count x (u16 id_len | id utf-8 | dim x f32)
"""
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from fusionpr import config
from fusionpr.errors import ArgumentError, DescriptorLookupError, FormatError, ShapeError
from fusionpr.geometry import RangeImage, SphericalConfig, spherical_projection
from fusionpr.interaction import colorize_cloud, rendered_range_image

logger = logging.getLogger(__name__)

DESCRIPTOR_MAGIC = b"FPRD"
HEADER = struct.Struct("<II")
ID_LENGTH = struct.Struct("<H")
HEADER_SIZE = len(DESCRIPTOR_MAGIC) + HEADER.size


@dataclass(frozen=True)
class DescriptorConfig:
    dim: int = config.DESCRIPTOR_DIM
    rows: int = config.LIDAR_RANGE_HEIGHT
    range_bins: int = config.DESCRIPTOR_RANGE_BINS
    r_min: float = config.RANGE_MIN_M
    r_max: float = config.RANGE_MAX_M
    use_color: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.range_bins < 1:
            raise ArgumentError("rows and range_bins must be positive")
        if self.rows * self.range_bins != self.dim:
            raise ArgumentError(
                f"rows x range_bins must equal dim ({self.rows} x {self.range_bins} != {self.dim})")
        if self.use_color and self.range_bins % 2:
            raise ArgumentError("the color variant splits range_bins evenly into range and hue bins")
        if not 0 < self.r_min < self.r_max:
            raise ArgumentError("need 0 < r_min < r_max for log-spaced bins")

    @property
    def geometric_bins(self) -> int:
        return self.range_bins // 2 if self.use_color else self.range_bins

    @property
    def hue_bins(self) -> int:
        return self.range_bins // 2 if self.use_color else 0

    def bin_edges(self) -> np.ndarray:
        return np.geomspace(self.r_min, self.r_max, self.geometric_bins + 1)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "rows": self.rows, "range_bins": self.range_bins,
                "r_min": self.r_min, "r_max": self.r_max, "use_color": self.use_color}


def _hue(rgb: np.ndarray) -> np.ndarray:
    """Hue in [0, 1) of (N, 3) RGB rows; gray pixels get 0."""
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    cmax = rgb.max(axis=1)
    delta = cmax - rgb.min(axis=1)
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(cmax == r, ((g - b) / safe) % 6.0,
                   np.where(cmax == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    hue = np.where(delta > 0, hue / 6.0, 0.0)
    return np.clip(hue, 0.0, np.nextafter(1.0, 0.0))


def extract_baseline(img: RangeImage, cfg: DescriptorConfig = None) -> np.ndarray:
    """Per-row range histograms (plus hue histograms with use_color), unit norm or all zero."""
    cfg = cfg or DescriptorConfig()
    if img.height != cfg.rows:
        raise ShapeError(f"range image has {img.height} rows, descriptor expects {cfg.rows}")
    if cfg.use_color and img.channels != 4:
        raise ShapeError("the color descriptor needs a 4-channel rendered range image")

    rows, cols = np.nonzero(img.valid_mask)
    ranges = img.range[rows, cols].astype(np.float64)
    n_geo = cfg.geometric_bins
    bins = np.clip(np.searchsorted(cfg.bin_edges(), ranges, side="right") - 1, 0, n_geo - 1)
    slots = rows * cfg.range_bins + bins
    if cfg.use_color:
        rgb = np.stack([img.data[c, rows, cols] for c in (1, 2, 3)], axis=1).astype(np.float64)
        hue_bins = np.floor(_hue(rgb) * cfg.hue_bins).astype(np.int64)
        slots = np.concatenate([slots, rows * cfg.range_bins + n_geo + hue_bins])

    counts = np.bincount(slots, minlength=cfg.dim).astype(np.float64)
    norm = np.linalg.norm(counts)
    if norm > 0:
        counts = counts / norm
    return counts.astype(np.float32)


# ── Descriptor sets ──────────────────────────────────────────────────

class DescriptorSet:
    """Immutable id -> descriptor mapping with a uniform dimension."""

    def __init__(self, ids: Sequence[str], matrix, dim: int = None):
        ids = [str(i) for i in ids]
        if dim is None:
            dim = np.asarray(matrix).shape[-1] if len(ids) else config.DESCRIPTOR_DIM
        mat = np.array(matrix, dtype=np.float32).reshape(len(ids), dim)
        if len(set(ids)) != len(ids):
            raise ArgumentError("descriptor ids must be unique")
        if not np.all(np.isfinite(mat)):
            raise ArgumentError("descriptor entries must be finite")
        mat.flags.writeable = False
        self._ids = ids
        self._matrix = mat
        self._dim = int(dim)
        self._rows = {sample_id: i for i, sample_id in enumerate(ids)}

    @classmethod
    def from_mapping(cls, mapping: Dict[str, np.ndarray], dim: int = None) -> "DescriptorSet":
        ids = list(mapping)
        if not ids:
            return cls([], np.zeros((0, dim or config.DESCRIPTOR_DIM)), dim=dim)
        return cls(ids, np.stack([np.asarray(mapping[i], dtype=np.float32) for i in ids]), dim=dim)

    @property
    def ids(self) -> List[str]:
        return list(self._ids)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, sample_id) -> bool:
        return sample_id in self._rows

    def __iter__(self) -> Iterator[str]:
        return iter(self._ids)

    def get(self, sample_id: str) -> np.ndarray:
        try:
            return self._matrix[self._rows[sample_id]]
        except KeyError:
            raise DescriptorLookupError(sample_id)

    def items(self) -> Iterable[Tuple[str, np.ndarray]]:
        return ((sample_id, self._matrix[i]) for i, sample_id in enumerate(self._ids))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DescriptorSet):
            return NotImplemented
        return (self._ids == other._ids and self._dim == other._dim
                and self._matrix.tobytes() == other._matrix.tobytes())

    __hash__ = None

    def __repr__(self) -> str:
        return f"DescriptorSet(n={len(self)}, dim={self.dim})"


def encode_descriptors(descriptors: DescriptorSet) -> bytes:
    parts = [DESCRIPTOR_MAGIC, HEADER.pack(len(descriptors), descriptors.dim)]
    for sample_id, vec in descriptors.items():
        raw_id = sample_id.encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise ArgumentError(f"descriptor id too long: {sample_id[:32]!r}...")
        parts.append(ID_LENGTH.pack(len(raw_id)))
        parts.append(raw_id)
        parts.append(np.asarray(vec, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_descriptors(data: bytes, path=None) -> DescriptorSet:
    if len(data) < len(DESCRIPTOR_MAGIC) or data[:4] != DESCRIPTOR_MAGIC:
        raise FormatError("bad descriptor file magic", path=path, offset=0)
    if len(data) < HEADER_SIZE:
        raise FormatError(f"truncated header: {len(data)} of {HEADER_SIZE} bytes", path=path, offset=4)
    count, dim = HEADER.unpack_from(data, 4)
    record_values = 4 * dim
    offset = HEADER_SIZE
    ids: List[str] = []
    seen = set()
    rows = []
    for _ in range(count):
        start = offset
        if offset + ID_LENGTH.size > len(data):
            raise FormatError(f"truncated record: expected {count} records, found {len(ids)}",
                              path=path, offset=offset)
        (id_len,) = ID_LENGTH.unpack_from(data, offset)
        offset += ID_LENGTH.size
        if offset + id_len + record_values > len(data):
            raise FormatError(
                f"truncated record: needs {ID_LENGTH.size + id_len + record_values} bytes, "
                f"{len(data) - start} left", path=path, offset=start)
        try:
            sample_id = data[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("descriptor id is not UTF-8", path=path, offset=offset)
        if sample_id in seen:
            raise FormatError(f"duplicate descriptor id {sample_id!r}", path=path, offset=start)
        seen.add(sample_id)
        offset += id_len
        rows.append(np.frombuffer(data, dtype="<f4", count=dim, offset=offset))
        offset += record_values
        ids.append(sample_id)
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after {count} records",
                          path=path, offset=offset)
    matrix = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    if not np.all(np.isfinite(matrix)):
        raise FormatError("non-finite descriptor entry", path=path)
    return DescriptorSet(ids, matrix, dim=dim)


def export_descriptors(descriptors: DescriptorSet, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_descriptors(descriptors))


def import_descriptors(path) -> DescriptorSet:
    path = Path(path)
    return decode_descriptors(path.read_bytes(), path=path)


# ── Dataset description ──────────────────────────────────────────────

def describe_sample(dataset, sample_id: str, cfg: DescriptorConfig) -> np.ndarray:
    """Baseline descriptor of one stored sample (rendered colors with use_color)."""
    loaded = dataset.load_sample(sample_id)
    spherical = SphericalConfig.lidar(**{**dataset.spherical.to_dict(), "height": cfg.rows})
    if cfg.use_color:
        colored = colorize_cloud(loaded.cloud, loaded.images, dataset.rig, dataset.T_ego_lidar)
        img = rendered_range_image(colored, spherical)
    else:
        img = spherical_projection(loaded.cloud, spherical)
    return extract_baseline(img, cfg)


def describe_dataset(dataset, cfg: DescriptorConfig = None, ids: Sequence[str] = None,
                     threads: int = 1) -> DescriptorSet:
    """Descriptors for `ids` (default: every sample), in id order given."""
    cfg = cfg or DescriptorConfig()
    ids = list(ids) if ids is not None else dataset.sample_ids
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(lambda i: describe_sample(dataset, i, cfg), ids))
    else:
        vectors = [describe_sample(dataset, i, cfg) for i in ids]
    logger.info("described %d samples (dim %d, color=%s)", len(ids), cfg.dim, cfg.use_color)
    matrix = np.stack(vectors) if vectors else np.zeros((0, cfg.dim), dtype=np.float32)
    return DescriptorSet(ids, matrix, dim=cfg.dim)
