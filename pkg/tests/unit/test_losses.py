"""
Unit tests for fusionpr/losses.py -- depth, triplet and reprojection losses,
checked against hand cases and brute-force loops.
"""
import math
import os
import sys
import pytest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from __mocks__.fixtures import make_cloud, make_pose, make_spherical
from fusionpr.errors import ArgumentError, InternalConsistencyError, ShapeError
from fusionpr.geometry import PointCloud, Pose, invert, spherical_projection, transform_points
from fusionpr.interaction import CameraTargets, DepthMap, SparseDepthTargets
from fusionpr.losses import (
    LossWeights,
    depth_loss,
    descriptor_distance,
    relative_lidar_pose,
    reprojection_loss,
    total_loss,
    triplet_loss,
)

pytestmark = pytest.mark.unit


def targets_of(*cameras):
    """cameras: (name, [(u, v, depth), ...]) pairs."""
    out = []
    for name, entries in cameras:
        u = np.array([e[0] for e in entries], dtype=np.int64)
        v = np.array([e[1] for e in entries], dtype=np.int64)
        d = np.array([e[2] for e in entries], dtype=np.float64)
        out.append(CameraTargets(name, u, v, d))
    return SparseDepthTargets(tuple(out))


# ── depth_loss ───────────────────────────────────────────────────────

class TestDepthLoss:
    def test_hand_case(self):
        depth = np.zeros((4, 5))
        depth[1, 2] = 3.0
        depth[3, 4] = 1.0
        targets = targets_of(("a", [(2, 1, 5.0), (4, 3, 0.5)]))
        assert depth_loss(targets, [DepthMap(depth)]) == pytest.approx(2.5)

    def test_mean_reduction(self):
        depth = np.zeros((4, 5))
        targets = targets_of(("a", [(0, 0, 1.0), (1, 1, 3.0)]))
        assert depth_loss(targets, [DepthMap(depth)], reduction="mean") == pytest.approx(2.0)

    def test_no_targets(self):
        targets = targets_of(("a", []))
        assert depth_loss(targets, [DepthMap.zeros(5, 4)]) == 0.0
        assert depth_loss(targets, [DepthMap.zeros(5, 4)], reduction="mean") == 0.0

    def test_camera_count_mismatch(self):
        with pytest.raises(ShapeError):
            depth_loss(targets_of(("a", [])), [])

    def test_target_outside_map(self):
        with pytest.raises(InternalConsistencyError):
            depth_loss(targets_of(("a", [(200, 0, 1.0)])), [DepthMap.zeros(5, 4)])

    def test_unknown_reduction(self):
        with pytest.raises(ArgumentError):
            depth_loss(targets_of(("a", [])), [DepthMap.zeros(5, 4)], reduction="max")

    def test_matches_brute_force(self, rng):
        for _ in range(1000):
            maps, cams = [], []
            for k in range(3):
                data = rng.uniform(0, 30, size=(6, 7)) * (rng.uniform(size=(6, 7)) < 0.5)
                maps.append(DepthMap(data))
                n = int(rng.integers(0, 10))
                cams.append((f"c{k}", [(int(rng.integers(0, 7)), int(rng.integers(0, 6)),
                                        float(rng.uniform(1, 30))) for _ in range(n)]))
            expected = 0.0
            for (name, entries), m in zip(cams, maps):
                for u, v, d in entries:
                    expected += abs(d - m.data[v][u])
            assert depth_loss(targets_of(*cams), maps) == pytest.approx(expected, rel=1e-9, abs=1e-12)


# ── triplet_loss ─────────────────────────────────────────────────────

class TestTripletLoss:
    def test_hand_case_is_negative(self):
        q = np.zeros(256)
        unit = np.zeros(256)
        unit[0] = 1.0
        loss = triplet_loss(q, [q, q], [unit, -unit, unit, -unit], alpha=0.5)
        assert loss == -3.0

    def test_hinge_clamps(self):
        q = np.zeros(4)
        unit = np.array([1.0, 0.0, 0.0, 0.0])
        assert triplet_loss(q, [q, q], [unit] * 4, alpha=0.5, hinge=True) == 0.0

    def test_positive_when_positives_far(self):
        q = np.zeros(2)
        loss = triplet_loss(q, [np.array([3.0, 0.0])], [np.array([1.0, 0.0])], alpha=0.5)
        assert loss == pytest.approx(1 * (0.5 + 9.0) - 1.0)

    def test_needs_positives_and_negatives(self):
        q = np.zeros(2)
        with pytest.raises(ArgumentError):
            triplet_loss(q, [], [q])
        with pytest.raises(ArgumentError):
            triplet_loss(q, [q], [])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            triplet_loss(np.zeros(3), [np.zeros(4)], [np.zeros(3)])

    def test_matches_brute_force(self, rng):
        for _ in range(1000):
            dim = int(rng.integers(1, 16))
            q = rng.normal(size=dim)
            pos = [rng.normal(size=dim) for _ in range(int(rng.integers(1, 4)))]
            neg = [rng.normal(size=dim) for _ in range(int(rng.integers(1, 6)))]
            hardest = 0.0
            for p in pos:
                hardest = max(hardest, sum((a - b) ** 2 for a, b in zip(q, p)))
            pushed = 0.0
            for n in neg:
                pushed += sum((a - b) ** 2 for a, b in zip(q, n))
            expected = len(pos) * (0.5 + hardest) - pushed
            assert triplet_loss(q, pos, neg) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_two_positives_four_negatives(self):
        q = np.zeros(1)
        pos = [np.array([math.sqrt(0.2)]), np.array([math.sqrt(0.4)])]
        neg = [np.array([1.0]), np.array([-1.0]), np.array([1.0]), np.array([-1.0])]
        assert triplet_loss(q, pos, neg, alpha=0.5) == pytest.approx(-2.2)

    def test_monotone_in_distances(self, rng):
        for _ in range(200):
            dim = int(rng.integers(1, 8))
            q = rng.normal(size=dim)
            pos = [rng.normal(size=dim) for _ in range(int(rng.integers(1, 4)))]
            neg = [rng.normal(size=dim) for _ in range(int(rng.integers(1, 6)))]
            base = triplet_loss(q, pos, neg)
            i = int(rng.integers(0, len(pos)))
            farther = list(pos)
            farther[i] = q + float(rng.uniform(1.0, 3.0)) * (pos[i] - q)
            assert triplet_loss(q, farther, neg) >= base - 1e-9
            k = int(rng.integers(0, len(neg)))
            pushed = list(neg)
            pushed[k] = q + float(rng.uniform(1.0, 3.0)) * (neg[k] - q)
            assert triplet_loss(q, pos, pushed) <= base + 1e-9

    def test_order_of_positives_and_negatives_ignored(self, rng):
        for _ in range(100):
            q = rng.normal(size=6)
            pos = [rng.normal(size=6) for _ in range(3)]
            neg = [rng.normal(size=6) for _ in range(5)]
            shuffled_pos = [pos[i] for i in rng.permutation(len(pos))]
            shuffled_neg = [neg[i] for i in rng.permutation(len(neg))]
            assert triplet_loss(q, shuffled_pos, shuffled_neg) == pytest.approx(triplet_loss(q, pos, neg))


class TestDescriptorDistance:
    def test_squared_euclidean(self):
        assert descriptor_distance([0.0, 0.0], [3.0, 4.0]) == 25.0

    def test_nan_rejected(self):
        with pytest.raises(ArgumentError):
            descriptor_distance([float("nan")], [0.0])


# ── relative_lidar_pose / reprojection_loss ──────────────────────────

class TestRelativeLidarPose:
    def test_maps_positive_frame_into_query_frame(self):
        world = make_cloud(n=200, seed=9, spread=30.0)
        lidar = Pose((0.3, 0.0, 1.84))
        pose_q = make_pose(10.0, -4.0, 0.0, yaw=0.4)
        pose_p = make_pose(13.0, -2.0, 0.0, yaw=-0.2)
        cloud_q = transform_points(world, invert(pose_q * lidar))
        cloud_p = transform_points(world, invert(pose_p * lidar))
        moved = transform_points(cloud_p, relative_lidar_pose(pose_q, pose_p, lidar))
        np.testing.assert_allclose(moved.xyz, cloud_q.xyz, atol=1e-9)

    def test_same_pose_is_identity(self):
        p = make_pose(5.0, 5.0, 0.0, yaw=1.0)
        rel = relative_lidar_pose(p, p, Pose((0.0, 0.0, 1.84)))
        np.testing.assert_allclose(rel.matrix(), np.eye(4), atol=1e-12)


class TestReprojectionLoss:
    def test_identical_clouds(self):
        cloud = make_cloud(n=300, seed=1)
        assert reprojection_loss(cloud, cloud, Pose.identity(), make_spherical()) == 0.0

    def test_one_point_missing(self):
        cfg = make_spherical()
        a = make_cloud([[10.0, 0.0, -0.5], [0.0, 10.0, -0.5]])
        b = make_cloud([[10.0, 0.0, -0.5]])
        expected = float(np.float32(math.hypot(10.0, 0.5)))
        assert reprojection_loss(a, b, Pose.identity(), cfg) == pytest.approx(expected, rel=1e-6)
        assert reprojection_loss(a, b, Pose.identity(), cfg, reduction="covalid_mean") == 0.0

    def test_empty_clouds(self):
        assert reprojection_loss(PointCloud(), PointCloud(), Pose.identity(), make_spherical()) == 0.0

    def test_unknown_reduction(self):
        with pytest.raises(ArgumentError):
            reprojection_loss(PointCloud(), PointCloud(), Pose.identity(), reduction="median")

    def test_matches_brute_force(self, rng):
        cfg = make_spherical(16, 4)
        for seed in range(1000):
            cloud_p = make_cloud(n=30, seed=seed)
            cloud_q = make_cloud(n=30, seed=seed + 5000)
            x, y = rng.uniform(-1.0, 1.0, size=2)
            pose = make_pose(float(x), float(y), 0.0, yaw=float(rng.uniform(-math.pi, math.pi)))
            a = spherical_projection(transform_points(cloud_p, pose), cfg).range
            b = spherical_projection(cloud_q, cfg).range
            expected = 0.0
            for r in range(cfg.height):
                for c in range(cfg.width):
                    expected += abs(float(a[r][c]) - float(b[r][c]))
            got = reprojection_loss(cloud_p, cloud_q, pose, cfg)
            assert got == pytest.approx(expected, rel=1e-9)


# ── total_loss / LossWeights ─────────────────────────────────────────

class TestTotalLoss:
    def test_default_weights(self):
        assert total_loss(2.0, 3.0, 4.0) == pytest.approx(0.01 * 2.0 + 3.0 + 0.01 * 4.0)

    def test_custom_weights(self):
        w = LossWeights(lambda_d=1.0, lambda_t=0.0, lambda_r=2.0)
        assert total_loss(2.0, 3.0, 4.0, w) == pytest.approx(10.0)

    def test_default_weights_worked_case(self):
        assert total_loss(2.0, 1.0, 3.0) == pytest.approx(1.05)

    def test_matches_weighted_sum(self, rng):
        for _ in range(1000):
            lam = rng.uniform(0.0, 5.0, size=3)
            ld, lr = rng.uniform(0.0, 100.0, size=2)
            lt = float(rng.normal(scale=10.0))
            w = LossWeights(lambda_d=float(lam[0]), lambda_t=float(lam[1]), lambda_r=float(lam[2]))
            expected = float(lam[0]) * ld + float(lam[1]) * lt + float(lam[2]) * lr
            assert total_loss(float(ld), lt, float(lr), w) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_linear_in_losses(self, rng):
        w = LossWeights(lambda_d=0.3, lambda_t=1.7, lambda_r=0.05)
        for _ in range(100):
            a = rng.uniform(0.0, 10.0, size=3)
            b = rng.uniform(0.0, 10.0, size=3)
            both = total_loss(*(float(x) for x in a + b), w)
            apart = total_loss(*(float(x) for x in a), w) + total_loss(*(float(x) for x in b), w)
            assert both == pytest.approx(apart, rel=1e-9)

    def test_negative_weight_rejected(self):
        with pytest.raises(ArgumentError):
            LossWeights(lambda_d=-1.0)
