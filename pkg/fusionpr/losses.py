"""
Training losses as plain scalar functions over concrete inputs: depth loss,
lazy triplet loss, reprojection loss and their weighted sum. No autodiff;
these score tuples and check training implementations.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fusionpr import config
from fusionpr.errors import ArgumentError, InternalConsistencyError, ShapeError
from fusionpr.geometry import PointCloud, Pose, SphericalConfig, compose, invert, spherical_projection, transform_points
from fusionpr.interaction import DepthMap, SparseDepthTargets

DEPTH_REDUCTIONS = ["sum", "mean"]
REPROJECTION_REDUCTIONS = ["sum", "covalid_mean"]


@dataclass(frozen=True)
class LossWeights:
    lambda_d: float = config.LAMBDA_DEPTH
    lambda_t: float = config.LAMBDA_TRIPLET
    lambda_r: float = config.LAMBDA_REPROJECTION
    alpha: float = config.TRIPLET_MARGIN

    def __post_init__(self):
        if min(self.lambda_d, self.lambda_t, self.lambda_r) < 0:
            raise ArgumentError("loss weights must be nonnegative")


def depth_loss(targets: SparseDepthTargets, depths: Sequence[DepthMap], reduction: str = "sum") -> float:
    """L1 between every sparse target and its camera's depth map at (u, v)."""
    if reduction not in DEPTH_REDUCTIONS:
        raise ArgumentError(f"unknown reduction {reduction!r}")
    if len(depths) != len(targets.cameras):
        raise ShapeError(f"{len(depths)} depth maps for {len(targets.cameras)} cameras")
    total = 0.0
    count = 0
    for cam_targets, depth in zip(targets.cameras, depths):
        if len(cam_targets) == 0:
            continue
        u, v = cam_targets.u, cam_targets.v
        if u.min() < 0 or v.min() < 0 or u.max() >= depth.width or v.max() >= depth.height:
            raise InternalConsistencyError(
                f"target for {cam_targets.camera} outside its {depth.width}x{depth.height} depth map")
        total += float(np.sum(np.abs(cam_targets.depth - depth.data[v, u])))
        count += len(cam_targets)
    if reduction == "mean":
        return total / count if count else 0.0
    return total


def _as_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(vec)):
        raise ArgumentError("descriptor entries must be finite")
    return vec


def descriptor_distance(a, b) -> float:
    """Squared Euclidean distance."""
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise ShapeError(f"descriptor lengths differ: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    return float(np.sum(diff * diff))


def triplet_loss(query, positives: Sequence, negatives: Sequence,
                 alpha: float = config.TRIPLET_MARGIN, hinge: bool = False) -> float:
    """
    Lazy triplet loss written literally:
        n_pos * (alpha + max_p dis(q, p)) - sum_n dis(q, n)
    It may be negative. With hinge=True the result is clamped at 0.
    """
    if len(positives) == 0 or len(negatives) == 0:
        raise ArgumentError("triplet loss needs at least one positive and one negative")
    hardest = max(descriptor_distance(query, p) for p in positives)
    pushed = sum(descriptor_distance(query, n) for n in negatives)
    loss = len(positives) * (alpha + hardest) - pushed
    return max(loss, 0.0) if hinge else loss


def relative_lidar_pose(pose_q: Pose, pose_p: Pose, T_ego_lidar: Pose) -> Pose:
    """Transform taking positive-frame LiDAR points into the query LiDAR frame."""
    return compose(compose(compose(invert(T_ego_lidar), invert(pose_q)), pose_p), T_ego_lidar)


def reprojection_loss(cloud_p: PointCloud, cloud_q: PointCloud, T_L: Pose, cfg: SphericalConfig = None,
                      reduction: str = "sum") -> float:
    """
    Sum over every pixel of |S(T_L * P_p) - S(P_q)| on the range channel.
    Invalid pixels take part with their 0 encoding; "covalid_mean" averages
    over pixels valid in both images instead.
    """
    if reduction not in REPROJECTION_REDUCTIONS:
        raise ArgumentError(f"unknown reduction {reduction!r}")
    cfg = cfg or SphericalConfig.lidar()
    moved = spherical_projection(transform_points(cloud_p, T_L), cfg).range.astype(np.float64)
    query = spherical_projection(cloud_q, cfg).range.astype(np.float64)
    diff = np.abs(moved - query)
    if reduction == "covalid_mean":
        covalid = (moved > 0) & (query > 0)
        return float(diff[covalid].mean()) if covalid.any() else 0.0
    return float(diff.sum())


def total_loss(ld: float, lt: float, lr: float, w: LossWeights = None) -> float:
    w = w or LossWeights()
    return w.lambda_d * ld + w.lambda_t * lt + w.lambda_r * lr
