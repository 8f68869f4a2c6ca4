"""
Desk-scale pipeline run: synth -> split (both schemes) -> describe -> evaluate.
Run this after installing dependencies to check the whole toolchain end to end.
"""
import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
from pathlib import Path

from fusionpr.main import run


def run_step(title: str, argv) -> None:
    print(f"\n{title}")
    print("-"*40)
    code = run([str(a) for a in argv])
    if code != 0:
        print(f"FAILED with exit code {code}")
        sys.exit(code)


def run_pipeline(work_dir: str, scenes: int = 8, samples: int = 80, seed: int = 0,
                 image_width: int = 160, image_height: int = 88):
    """Run every pipeline stage into work_dir."""
    work = Path(work_dir)
    dataset = work / "dataset"
    descriptors = work / "baseline.fprd"

    print("="*60)
    print("fusionpr - Desk-scale Pipeline")
    print("="*60)

    run_step("Step 1: Generating synthetic dataset...",
             ["synth", "--out", dataset, "--scenes", scenes, "--samples-per-scene", samples,
              "--seed", seed, "--image-width", image_width, "--image-height", image_height])

    run_step("Step 2: Building supervised split...",
             ["split", "supervised", "--dataset", dataset, "--out", work / "supervised", "--seed", seed])

    run_step("Step 3: Building self-supervised split...",
             ["split", "self-supervised", "--dataset", dataset, "--out", work / "self-supervised",
              "--seed", seed])

    run_step("Step 4: Computing baseline descriptors...",
             ["describe", "--dataset", dataset, "--method", "baseline", "--out", descriptors])

    for scheme in ("supervised", "self-supervised"):
        run_step(f"Step 5: Evaluating on the {scheme} split...",
                 ["evaluate", "--descriptors", descriptors, "--split", work / scheme,
                  "--out", work / f"recall_{scheme}.json"])

    print("\n" + "="*60)
    print("PIPELINE COMPLETE!")
    print("="*60)
    print(f"\nReports are in: {work}")
    print("="*60)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("work_dir", nargs="?", default="pipeline_run")
    parser.add_argument("--scenes", type=int, default=8)
    parser.add_argument("--samples-per-scene", type=int, default=80)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    run_pipeline(args.work_dir, args.scenes, args.samples_per_scene, args.seed)
