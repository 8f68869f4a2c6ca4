"""
Exact descriptor retrieval and average-recall evaluation.

AR@x = 100 * (queries with a ground-truth id among their top x) / N_query.
Queries without ground truth are left out of N_query and counted separately.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

from fusionpr import config
from fusionpr.benchmark import GroundTruthEntry
from fusionpr.descriptor import DescriptorSet
from fusionpr.errors import ArgumentError, DescriptorLookupError, ShapeError

logger = logging.getLogger(__name__)


class RetrievalIndex:
    """Database descriptors in one contiguous float64 block; immutable after build."""

    def __init__(self, ids: Sequence[str], matrix):
        self._ids = list(ids)
        mat = np.array(matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(self._ids):
            raise ShapeError(f"expected {len(self._ids)} descriptor rows, got shape {mat.shape}")
        mat.flags.writeable = False
        self._matrix = mat
        # lexicographic rank of each id, the tie-breaker for equal distances
        order = sorted(range(len(self._ids)), key=lambda i: self._ids[i])
        self._id_rank = np.empty(len(self._ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(self._ids))

    @property
    def ids(self) -> List[str]:
        return list(self._ids)

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def __len__(self) -> int:
        return len(self._ids)

    def distances(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if len(self._ids) and q.shape[0] != self.dim:
            raise ShapeError(f"query has dim {q.shape[0]}, index has dim {self.dim}")
        diff = self._matrix - q
        return np.sum(diff * diff, axis=1)

    def top_k(self, query, k: int) -> List[str]:
        if k < 1:
            raise ArgumentError(f"k must be >= 1, got {k}")
        dist = self.distances(query)
        order = np.lexsort((self._id_rank, dist))[:k]
        return [self._ids[i] for i in order]


def build_index(descriptors: DescriptorSet, database_ids: Sequence[str]) -> RetrievalIndex:
    ids = list(database_ids)
    seen = set()
    for sample_id in ids:
        if sample_id in seen:
            raise ArgumentError(f"duplicate database id {sample_id!r}")
        seen.add(sample_id)
    if not ids:
        return RetrievalIndex([], np.zeros((0, descriptors.dim)))
    matrix = np.stack([descriptors.get(i) for i in ids])
    return RetrievalIndex(ids, matrix)


def top_k(index: RetrievalIndex, query, k: int) -> List[str]:
    return index.top_k(query, k)


def random_ranking_recall(n_database: int, gt_sizes: Sequence[int], x: int) -> float:
    """Expected AR@x (percent) when every query's ranking is a uniform random permutation."""
    if not gt_sizes or n_database <= 0:
        return 0.0
    x = min(x, n_database)
    total = math.comb(n_database, x)
    hit = [1.0 - math.comb(n_database - g, x) / total for g in gt_sizes]
    return 100.0 * sum(hit) / len(hit)


@dataclass
class RecallReport:
    n_query: int
    excluded_empty_gt: int
    recalls: Dict[int, float]
    per_query: List[Tuple[str, Optional[int]]] = field(default_factory=list)
    random_baseline: Dict[int, float] = field(default_factory=dict)
    n_database: int = 0
    subset: str = "test"

    def to_dict(self) -> dict:
        return {
            "n_query": self.n_query,
            "excluded_empty_gt": self.excluded_empty_gt,
            "recall": {str(k): v for k, v in self.recalls.items()},
            "per_query": [{"query": q, "rank": r} for q, r in self.per_query],
            "random_baseline": {str(k): v for k, v in self.random_baseline.items()},
            "n_database": self.n_database,
            "subset": self.subset,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": list(self.recalls), "AR": list(self.recalls.values())})

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)

    def write_xlsx(self, path) -> None:
        """Workbook with a recall sheet and a per-query sheet."""
        wb = Workbook()
        ws_recall = wb.active
        ws_recall.title = "Recall"

        header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
        header_font = Font(bold=True, color="FFFFFF")
        thin_border = Border(
            left=Side(style='thin'),
            right=Side(style='thin'),
            top=Side(style='thin'),
            bottom=Side(style='thin')
        )

        def write_sheet(ws, headers, rows):
            for col, header in enumerate(headers, 1):
                cell = ws.cell(row=1, column=col, value=header)
                cell.fill = header_fill
                cell.font = header_font
                cell.alignment = Alignment(horizontal='center')
                cell.border = thin_border
            for row_idx, row in enumerate(rows, 2):
                for col_idx, value in enumerate(row, 1):
                    cell = ws.cell(row=row_idx, column=col_idx, value=value)
                    cell.border = thin_border
            for col in ws.columns:
                column = col[0].column_letter
                max_length = max(len(str(cell.value)) for cell in col)
                ws.column_dimensions[column].width = min(max_length + 2, 50)

        write_sheet(ws_recall, ["x", "AR", "Random AR"],
                    [(k, v, self.random_baseline.get(k)) for k, v in self.recalls.items()])
        write_sheet(wb.create_sheet("Queries"), ["Query", "First Hit Rank"],
                    [(q, r) for q, r in self.per_query])

        Path(path).parent.mkdir(parents=True, exist_ok=True)
        wb.save(path)


def _check_ks(ks: Sequence[int]) -> List[int]:
    ks = [int(k) for k in ks]
    if not ks or any(k < 1 for k in ks) or ks != sorted(set(ks)):
        raise ArgumentError(f"ks must be distinct positive integers in ascending order, got {ks}")
    return ks


def first_hit_rank(index: RetrievalIndex, query, gt_ids: Sequence[str]) -> Optional[int]:
    """1-based rank of the first ground-truth id in the full ranking."""
    if len(index) == 0:
        return None
    gt = set(gt_ids)
    for rank, sample_id in enumerate(index.top_k(query, len(index)), 1):
        if sample_id in gt:
            return rank
    return None


def evaluate_recall(index: RetrievalIndex, entries: Sequence[GroundTruthEntry], descriptors: DescriptorSet,
                    ks: Sequence[int] = None, subset: str = "test", threads: int = 1) -> RecallReport:
    ks = _check_ks(ks or config.RECALL_KS)
    scored = [e for e in entries if not e.empty]
    excluded = len(entries) - len(scored)
    for e in scored:
        if e.query_id not in descriptors:
            raise DescriptorLookupError(e.query_id)

    def rank_of(entry: GroundTruthEntry):
        return first_hit_rank(index, descriptors.get(entry.query_id), entry.gt_ids)

    if threads > 1 and len(scored) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ranks = list(pool.map(rank_of, scored))
    else:
        ranks = [rank_of(e) for e in scored]

    n_query = len(scored)
    if n_query == 0:
        logger.warning("no test query has ground truth; every AR@x is reported as 0")
    recalls = {k: (100.0 * sum(1 for r in ranks if r is not None and r <= k) / n_query if n_query else 0.0)
               for k in ks}
    gt_sizes = [len(e.gt_ids) for e in scored]
    report = RecallReport(
        n_query=n_query,
        excluded_empty_gt=excluded,
        recalls=recalls,
        per_query=[(e.query_id, r) for e, r in zip(scored, ranks)],
        random_baseline={k: random_ranking_recall(len(index), gt_sizes, k) for k in ks},
        n_database=len(index),
        subset=subset,
    )
    logger.info("recall over %d queries (%d without ground truth): %s", n_query, excluded,
                ", ".join(f"AR@{k}={v:.2f}" for k, v in recalls.items()))
    return report
