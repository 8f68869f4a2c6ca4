"""
render: write the interaction products of one sample as PPM images.
"""
import logging
import time
from pathlib import Path

import numpy as np

from fusionpr.commands.common import add_command, emit, require_path
from fusionpr.dataio import load_dataset, write_ppm
from fusionpr.geometry import RangeImage, SphericalConfig, spherical_projection
from fusionpr.interaction import (
    colorize_cloud,
    depth_maps_to_lidar_range,
    render_depth_maps,
    render_sparse_depth,
    rendered_range_image,
)
from fusionpr.serialization import dump_json

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = add_command(subparsers, "render", "render depth overlays and range images for one sample", parents)
    parser.add_argument("--dataset", required=True, help="dataset directory or manifest")
    parser.add_argument("--sample", required=True, help="sample id")
    parser.add_argument("--out", required=True, help="output directory")
    parser.set_defaults(handler=run_render)


def range_to_gray(values: np.ndarray, r_max: float) -> np.ndarray:
    """Near is bright, invalid (0) is black."""
    gray = np.where(values > 0, 255.0 * (1.0 - np.clip(values / r_max, 0.0, 1.0)) + 0.5, 0.0)
    gray = np.where(values > 0, np.maximum(gray, 1.0), 0.0).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=2)


def range_image_rgb(img: RangeImage) -> np.ndarray:
    """RGB channels of a rendered range image as 8-bit pixels."""
    rgb = np.moveaxis(np.asarray(img.data[1:4], dtype=np.float64), 0, -1)
    return np.clip(np.floor(rgb * 255.0 + 0.5), 0, 255).astype(np.uint8)


def sparse_overlay(image_pixels: np.ndarray, depth: np.ndarray, r_max: float) -> np.ndarray:
    """Camera image dimmed, with every depth target drawn in gray."""
    out = (image_pixels.astype(np.float64) * 0.4).astype(np.uint8)
    mask = depth > 0
    out[mask] = range_to_gray(depth, r_max)[mask]
    return out


def run_render(args) -> int:
    dataset = load_dataset(require_path(args.dataset, "--dataset"), check_files=False)
    loaded = dataset.load_sample(args.sample)
    out = Path(args.out)
    r_max = dataset.spherical.r_max
    files = {}

    started = time.perf_counter()
    targets = render_sparse_depth(loaded.cloud, dataset.rig, dataset.T_ego_lidar)
    depth_maps = render_depth_maps(targets, dataset.rig)
    logger.info("sparse depth supervision: %.3f s", time.perf_counter() - started)
    for cam, image, depth in zip(dataset.rig, loaded.images, depth_maps):
        path = out / f"{args.sample}_{cam.name}_sparse_depth.ppm"
        write_ppm(sparse_overlay(image.to_uint8(), depth.data, r_max), path)
        files[f"sparse_depth_{cam.name}"] = str(path)

    started = time.perf_counter()
    camera_cfg = SphericalConfig.camera_branch(**{k: v for k, v in dataset.spherical.to_dict().items()
                                                  if k not in ("width", "height")})
    holistic = depth_maps_to_lidar_range(depth_maps, dataset.rig, dataset.T_ego_lidar, camera_cfg)
    logger.info("depth maps to holistic range image: %.3f s", time.perf_counter() - started)
    files["holistic_range"] = str(out / f"{args.sample}_holistic_range.ppm")
    write_ppm(range_to_gray(holistic.range, r_max), files["holistic_range"])

    lidar_range = spherical_projection(loaded.cloud, dataset.spherical)
    files["lidar_range"] = str(out / f"{args.sample}_lidar_range.ppm")
    write_ppm(range_to_gray(lidar_range.range, r_max), files["lidar_range"])

    started = time.perf_counter()
    colored = colorize_cloud(loaded.cloud, loaded.images, dataset.rig, dataset.T_ego_lidar)
    rendered = rendered_range_image(colored, dataset.spherical)
    logger.info("appearance rendering: %.3f s", time.perf_counter() - started)
    files["rendered_rgb"] = str(out / f"{args.sample}_rendered_rgb.ppm")
    write_ppm(range_image_rgb(rendered), files["rendered_rgb"])

    summary = {
        "sample": args.sample,
        "points": len(loaded.cloud),
        "visible_points": int(colored.visible.sum()),
        "sparse_targets": {t.camera: len(t) for t in targets.cameras},
        "lidar_valid_pixels": int(lidar_range.valid_mask.sum()),
        "holistic_valid_pixels": int(holistic.valid_mask.sum()),
        "rendered_valid_pixels": int(rendered.valid_mask.sum()),
        "files": files,
    }
    dump_json(summary, out / f"{args.sample}_render.json")
    emit(summary)
    return 0
