"""
Benchmark data organization.

Supervised scheme: samples are admitted to the database when they are at
least `delta` away from every database sample; the rest become training
queries (scene dated before gamma) or test queries. Training tuples are mined
by position, test ground truth is every database sample within rho_pos.

Self-supervised scheme: whole scenes are split by date; tuples in old scenes
are mined by time (preceding samples are positives, a running buffer of older
samples supplies negatives) and every old sample forms the retrieval database.
"""
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from fusionpr import config
from fusionpr.errors import ArgumentError
from fusionpr.geometry import Pose
from fusionpr.serialization import format_date

logger = logging.getLogger(__name__)

SCHEME_SUPERVISED = "supervised"
SCHEME_SELF_SUPERVISED = "self-supervised"
SCHEMES = [SCHEME_SUPERVISED, SCHEME_SELF_SUPERVISED]


# ── Samples and scenes ───────────────────────────────────────────────

@dataclass(frozen=True)
class Sample:
    id: str
    scene_id: str
    timestamp: int  # microseconds
    pose: Pose
    lidar_path: str = ""
    image_paths: Dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @property
    def position(self) -> Tuple[float, float]:
        """Planar position; altitude plays no part in distance thresholds."""
        return (self.pose.translation[0], self.pose.translation[1])


@dataclass(frozen=True)
class Scene:
    id: str
    date: date
    samples: Tuple[Sample, ...] = ()

    def __post_init__(self):
        samples = tuple(self.samples)
        for prev, cur in zip(samples, samples[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ArgumentError(
                    f"scene {self.id}: timestamps must increase strictly "
                    f"({prev.id}={prev.timestamp}, {cur.id}={cur.timestamp})")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)


def all_samples(scenes: Sequence[Scene]) -> List[Sample]:
    return [s for scene in scenes for s in scene.samples]


def _check_unique_ids(samples: Sequence[Sample]) -> None:
    seen = set()
    for s in samples:
        if s.id in seen:
            raise ArgumentError(f"duplicate sample id {s.id!r}")
        seen.add(s.id)


# ── Parameters ───────────────────────────────────────────────────────

def resolve_gamma(gamma: Optional[date], gamma_days: int, scenes: Sequence[Scene]) -> Optional[date]:
    """An explicit date wins; otherwise `gamma_days` after the earliest scene date."""
    if gamma is not None:
        return gamma
    if not scenes:
        return None
    return min(scene.date for scene in scenes) + timedelta(days=gamma_days)


def _check_counts(n_pos: int, n_neg: int, seed: int, val_fraction: float) -> None:
    if n_pos < 1 or n_neg < 1:
        raise ArgumentError(f"n_pos and n_neg must be >= 1, got {n_pos} and {n_neg}")
    if seed < 0:
        raise ArgumentError(f"seed must be nonnegative, got {seed}")
    if not 0.0 <= val_fraction <= 1.0:
        raise ArgumentError(f"val_fraction must lie in [0, 1], got {val_fraction}")


@dataclass(frozen=True)
class SupervisedParams:
    delta: float = config.DELTA_M
    gamma: Optional[date] = None
    gamma_days: int = config.GAMMA_DAYS
    rho_pos: float = config.RHO_POS_M
    rho_neg: float = config.RHO_NEG_M
    n_pos: int = config.N_POS
    n_neg: int = config.N_NEG
    seed: int = config.DEFAULT_SEED
    val_fraction: float = config.VAL_FRACTION

    def __post_init__(self):
        if not self.delta > 0:
            raise ArgumentError(f"delta must be positive, got {self.delta}")
        if not 0 < self.rho_pos < self.rho_neg:
            raise ArgumentError(
                f"need 0 < rho_pos < rho_neg, got rho_pos={self.rho_pos} rho_neg={self.rho_neg}")
        _check_counts(self.n_pos, self.n_neg, self.seed, self.val_fraction)

    def to_dict(self, gamma: Optional[date]) -> dict:
        return {
            "delta": self.delta,
            "gamma": format_date(gamma),
            "gamma_days": self.gamma_days,
            "rho_pos": self.rho_pos,
            "rho_neg": self.rho_neg,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "seed": self.seed,
            "val_fraction": self.val_fraction,
        }


@dataclass(frozen=True)
class SelfSupervisedParams:
    gamma: Optional[date] = None
    gamma_days: int = config.GAMMA_DAYS
    rho_pos: float = config.RHO_POS_M
    sigma_neg: int = config.SIGMA_NEG
    n_pos: int = config.N_POS
    n_neg: int = config.N_NEG
    seed: int = config.DEFAULT_SEED
    mode: str = "faithful"
    val_fraction: float = config.VAL_FRACTION

    def __post_init__(self):
        if not self.rho_pos > 0:
            raise ArgumentError(f"rho_pos must be positive, got {self.rho_pos}")
        if self.sigma_neg < 1:
            raise ArgumentError(f"sigma_neg must be >= 1, got {self.sigma_neg}")
        if self.mode not in config.MINING_MODES:
            raise ArgumentError(f"mode must be one of {config.MINING_MODES}, got {self.mode!r}")
        _check_counts(self.n_pos, self.n_neg, self.seed, self.val_fraction)

    @property
    def first_query_index(self) -> int:
        return self.sigma_neg + self.n_pos + self.n_neg

    def to_dict(self, gamma: Optional[date]) -> dict:
        return {
            "gamma": format_date(gamma),
            "gamma_days": self.gamma_days,
            "rho_pos": self.rho_pos,
            "sigma_neg": self.sigma_neg,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "seed": self.seed,
            "mode": self.mode,
            "val_fraction": self.val_fraction,
        }


# ── Results ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrainingTuple:
    query_id: str
    positive_ids: Tuple[str, ...]
    negative_ids: Tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "query": self.query_id,
            "positives": list(self.positive_ids),
            "negatives": list(self.negative_ids),
        }


@dataclass(frozen=True)
class GroundTruthEntry:
    query_id: str
    gt_ids: Tuple[str, ...]

    @property
    def empty(self) -> bool:
        return not self.gt_ids

    def to_dict(self) -> dict:
        return {"query": self.query_id, "gt": list(self.gt_ids)}


@dataclass
class MiningResult:
    tuples: List[TrainingTuple]
    skipped: List[Tuple[str, str]] = field(default_factory=list)  # (query id, reason)


@dataclass
class SelfSupervisedMining:
    tuples: List[TrainingTuple]
    old_samples: List[Sample]
    negative_buffers: Dict[str, List[str]]
    short_scenes: List[str] = field(default_factory=list)
    skipped: List[Tuple[str, str]] = field(default_factory=list)


@dataclass
class SupervisedPartition:
    database: List[Sample]
    train_queries: List[Sample]
    test_queries: List[Sample]


@dataclass
class BenchmarkSplit:
    scheme: str
    params: dict
    database_ids: List[str]
    tuples: List[TrainingTuple]
    test_entries: List[GroundTruthEntry]
    validation_ids: List[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    negative_buffers: Dict[str, List[str]] = field(default_factory=dict)

    def entries_for(self, subset: str = "test") -> List[GroundTruthEntry]:
        return select_subset(self.test_entries, self.validation_ids, subset)


def select_subset(entries: Sequence[GroundTruthEntry], validation_ids: Sequence[str],
                  subset: str) -> List[GroundTruthEntry]:
    if subset not in config.EVAL_SUBSETS:
        raise ArgumentError(f"subset must be one of {config.EVAL_SUBSETS}, got {subset!r}")
    if subset == "all":
        return list(entries)
    held_out = set(validation_ids)
    if subset == "validation":
        return [e for e in entries if e.query_id in held_out]
    return [e for e in entries if e.query_id not in held_out]


# ── Radius search ────────────────────────────────────────────────────

def _distances(positions: np.ndarray, point) -> np.ndarray:
    dx = positions[:, 0] - point[0]
    dy = positions[:, 1] - point[1]
    return np.sqrt(dx * dx + dy * dy)


class PositionIndex:
    """
    Exact planar radius search over a fixed list of samples. The k-d tree
    only narrows candidates; membership is decided on the exact distance.
    """

    def __init__(self, ids: Sequence[str], positions):
        self.ids = list(ids)
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        if len(self.ids) != len(self.positions):
            raise ArgumentError("ids and positions must have the same length")
        self._tree = cKDTree(self.positions) if len(self.ids) else None

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "PositionIndex":
        return cls([s.id for s in samples], [s.position for s in samples])

    def __len__(self) -> int:
        return len(self.ids)

    def within(self, point, radius: float) -> List[str]:
        """Ids within `radius` (inclusive), ascending by distance, then by id."""
        if not radius > 0:
            raise ArgumentError(f"radius must be positive, got {radius}")
        if self._tree is None:
            return []
        slack = radius * (1 + 1e-9) + 1e-12
        idx = np.asarray(self._tree.query_ball_point(point, slack), dtype=np.int64)
        if len(idx) == 0:
            return []
        dist = _distances(self.positions[idx], point)
        keep = dist <= radius
        hits = sorted(zip(dist[keep].tolist(), (self.ids[i] for i in idx[keep])))
        return [sample_id for _, sample_id in hits]

    def beyond(self, point, radius: float) -> List[str]:
        """Ids strictly farther than `radius`, in index order."""
        if self._tree is None:
            return []
        far = _distances(self.positions, point) > radius
        return [self.ids[i] for i in np.flatnonzero(far)]


def knn_within(query_pos, candidates: Sequence[Tuple[str, Tuple[float, float]]], radius: float) -> List[str]:
    ids = [c[0] for c in candidates]
    positions = [tuple(c[1])[:2] for c in candidates]
    return PositionIndex(ids, positions).within(tuple(query_pos)[:2], radius)


# ── Seeding ──────────────────────────────────────────────────────────

def query_rng(seed: int, query_id: str) -> np.random.Generator:
    """Per-query generator, independent of evaluation order and worker count."""
    digest = hashlib.sha256(query_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def _pick(rng: np.random.Generator, pool: Sequence[str], count: int) -> Tuple[str, ...]:
    chosen = rng.choice(len(pool), size=count, replace=False)
    return tuple(pool[int(i)] for i in chosen)


# ── Supervised scheme ────────────────────────────────────────────────

def split_supervised(scenes: Sequence[Scene], p: SupervisedParams) -> SupervisedPartition:
    """
    Order-dependent database admission. Database positions are hashed into
    cells of side delta so the minimum-distance check only visits the 3x3
    neighbourhood of the sample's cell.
    """
    _check_unique_ids(all_samples(scenes))
    gamma = resolve_gamma(p.gamma, p.gamma_days, scenes)
    cells: Dict[Tuple[int, int], List[Tuple[float, float]]] = {}
    part = SupervisedPartition([], [], [])
    for scene in scenes:
        for sample in scene.samples:
            x, y = sample.position
            cx, cy = math.floor(x / p.delta), math.floor(y / p.delta)
            near = False
            for gx in (cx - 1, cx, cx + 1):
                for gy in (cy - 1, cy, cy + 1):
                    for ax, ay in cells.get((gx, gy), ()):
                        dx, dy = x - ax, y - ay
                        if math.sqrt(dx * dx + dy * dy) < p.delta:
                            near = True
                            break
                    if near:
                        break
                if near:
                    break
            if not near:
                part.database.append(sample)
                cells.setdefault((cx, cy), []).append((x, y))
            elif scene.date < gamma:
                part.train_queries.append(sample)
            else:
                part.test_queries.append(sample)
    logger.info("supervised split: %d database, %d train queries, %d test queries",
                len(part.database), len(part.train_queries), len(part.test_queries))
    return part


def _mine_one(index: PositionIndex, query: Sample, p: SupervisedParams):
    positives = index.within(query.position, p.rho_pos)
    if len(positives) < p.n_pos:
        return None, f"{len(positives)} positive candidates within {p.rho_pos} m"
    negatives = index.beyond(query.position, p.rho_neg)
    if len(negatives) < p.n_neg:
        return None, f"{len(negatives)} negative candidates beyond {p.rho_neg} m"
    rng = query_rng(p.seed, query.id)
    return TrainingTuple(query.id, _pick(rng, positives, p.n_pos), _pick(rng, negatives, p.n_neg)), None


def mine_supervised(database: Sequence[Sample], queries: Sequence[Sample], p: SupervisedParams,
                    threads: int = 1) -> MiningResult:
    """Mine training tuples for every training query against the database."""
    index = PositionIndex.from_samples(database)
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda q: _mine_one(index, q, p), queries))
    else:
        outcomes = [_mine_one(index, q, p) for q in queries]

    result = MiningResult([])
    for query, (tup, reason) in zip(queries, outcomes):
        if tup is None:
            result.skipped.append((query.id, reason))
            logger.debug("skipping query %s: %s", query.id, reason)
        else:
            result.tuples.append(tup)
    if result.skipped:
        logger.info("supervised mining skipped %d of %d queries", len(result.skipped), len(queries))
    return result


def ground_truth(queries: Sequence[Sample], database: Sequence[Sample], rho_pos: float) -> List[GroundTruthEntry]:
    index = PositionIndex.from_samples(database)
    entries = [GroundTruthEntry(q.id, tuple(index.within(q.position, rho_pos))) for q in queries]
    empty = sum(1 for e in entries if e.empty)
    if empty:
        logger.info("%d of %d test queries have no ground truth within %s m", empty, len(entries), rho_pos)
    return entries


def split_validation(entries: Sequence[GroundTruthEntry], fraction: float,
                     seed: int) -> Tuple[List[GroundTruthEntry], List[GroundTruthEntry]]:
    """Hold out floor(fraction * n) queries; both parts keep input order."""
    if not 0.0 <= fraction <= 1.0:
        raise ArgumentError(f"validation fraction must lie in [0, 1], got {fraction}")
    n_val = int(math.floor(fraction * len(entries)))
    chosen = set(np.random.default_rng(seed).choice(len(entries), size=n_val, replace=False).tolist())
    validation = [e for i, e in enumerate(entries) if i in chosen]
    test = [e for i, e in enumerate(entries) if i not in chosen]
    return validation, test


def build_supervised_split(scenes: Sequence[Scene], p: SupervisedParams, threads: int = 1) -> BenchmarkSplit:
    gamma = resolve_gamma(p.gamma, p.gamma_days, scenes)
    part = split_supervised(scenes, p)
    mined = mine_supervised(part.database, part.train_queries, p, threads=threads)
    entries = ground_truth(part.test_queries, part.database, p.rho_pos)
    validation, _ = split_validation(entries, p.val_fraction, p.seed)
    return BenchmarkSplit(
        scheme=SCHEME_SUPERVISED,
        params=p.to_dict(gamma),
        database_ids=[s.id for s in part.database],
        tuples=mined.tuples,
        test_entries=entries,
        validation_ids=[e.query_id for e in validation],
        summary={
            "database": len(part.database),
            "train_queries": len(part.train_queries),
            "test_queries": len(part.test_queries),
            "tuples": len(mined.tuples),
            "skipped_queries": len(mined.skipped),
            "empty_gt": sum(1 for e in entries if e.empty),
            "validation": len(validation),
        },
    )


# ── Self-supervised scheme ───────────────────────────────────────────

def split_selfsupervised(scenes: Sequence[Scene], p: SelfSupervisedParams) -> Tuple[List[Scene], List[Scene]]:
    """Whole scenes dated strictly before gamma are old; the rest are new."""
    gamma = resolve_gamma(p.gamma, p.gamma_days, scenes)
    old = [scene for scene in scenes if scene.date < gamma]
    new = [scene for scene in scenes if not scene.date < gamma]
    return old, new


def mine_selfsupervised(old_scenes: Sequence[Scene], p: SelfSupervisedParams) -> SelfSupervisedMining:
    """
    Time-based mining over each old scene.

    faithful: the running negative buffer is kept exactly as the listing
    builds it, duplicates included, so early negatives may sit within
    sigma_neg of the query or inside its positive window. Negatives are
    drawn by buffer position, so a tuple may name the same sample twice.
    sanitized: negatives are drawn from the distinct buffered samples at
    least sigma_neg + 1 samples older than the query and outside the
    positive window.
    """
    result = SelfSupervisedMining([], [], {})
    first = p.first_query_index
    for scene in old_scenes:
        samples = scene.samples
        if len(samples) <= first:
            result.short_scenes.append(scene.id)
            logger.info("scene %s has %d samples; no tuples before index %d", scene.id, len(samples), first)
        buffer: List[int] = []
        for j, sample in enumerate(samples):
            result.old_samples.append(sample)
            if j < first:
                buffer.append(j)
                continue
            positives = tuple(samples[k].id for k in range(j - p.n_pos, j))
            if p.mode == "faithful":
                pool = [samples[k].id for k in buffer]
            else:
                pool = [samples[k].id for k in sorted(set(buffer)) if k < j - p.sigma_neg and k < j - p.n_pos]
            buffer.append(j - p.sigma_neg)
            if len(pool) < p.n_neg:
                result.skipped.append((sample.id, f"{len(pool)} negative candidates"))
                continue
            rng = query_rng(p.seed, sample.id)
            result.tuples.append(TrainingTuple(sample.id, positives, _pick(rng, pool, p.n_neg)))
        result.negative_buffers[scene.id] = [samples[k].id for k in buffer]
    if result.skipped:
        logger.info("self-supervised mining skipped %d queries", len(result.skipped))
    return result


def build_selfsupervised_split(scenes: Sequence[Scene], p: SelfSupervisedParams) -> BenchmarkSplit:
    _check_unique_ids(all_samples(scenes))
    gamma = resolve_gamma(p.gamma, p.gamma_days, scenes)
    old, new = split_selfsupervised(scenes, p)
    mined = mine_selfsupervised(old, p)
    entries = ground_truth(all_samples(new), mined.old_samples, p.rho_pos)
    validation, _ = split_validation(entries, p.val_fraction, p.seed)
    logger.info("self-supervised split: %d old scenes, %d new scenes, %d tuples",
                len(old), len(new), len(mined.tuples))
    return BenchmarkSplit(
        scheme=SCHEME_SELF_SUPERVISED,
        params=p.to_dict(gamma),
        database_ids=[s.id for s in mined.old_samples],
        tuples=mined.tuples,
        test_entries=entries,
        validation_ids=[e.query_id for e in validation],
        summary={
            "old_scenes": len(old),
            "new_scenes": len(new),
            "database": len(mined.old_samples),
            "tuples": len(mined.tuples),
            "short_scenes": len(mined.short_scenes),
            "skipped_queries": len(mined.skipped),
            "test_queries": len(entries),
            "empty_gt": sum(1 for e in entries if e.empty),
            "validation": len(validation),
        },
        negative_buffers=mined.negative_buffers,
    )
