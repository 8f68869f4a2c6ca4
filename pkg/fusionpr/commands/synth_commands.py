"""
synth: write a synthetic multi-scene dataset.
"""
from fusionpr import config
from fusionpr.commands.common import add_command, emit, usage_errors
from fusionpr.synthetic import SynthParams, generate_synthetic


def register(subparsers, parents):
    parser = add_command(subparsers, "synth", "generate a synthetic dataset with revisits", parents)
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--scenes", type=int, default=8, help="number of scenes")
    parser.add_argument("--samples-per-scene", type=int, default=80, help="samples per scene")
    parser.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="random seed")
    parser.add_argument("--revisit-rate", type=float, default=0.5,
                        help="share of each scene re-driving the previous scene's path")
    parser.add_argument("--landmarks", type=int, default=None,
                        help="landmark count (default: one per 8 m of road)")
    parser.add_argument("--cameras", type=int, default=config.NUM_CAMERAS, help="cameras in the rig")
    parser.add_argument("--image-width", type=int, default=config.IMAGE_WIDTH, help="image width (px)")
    parser.add_argument("--image-height", type=int, default=config.IMAGE_HEIGHT, help="image height (px)")
    parser.set_defaults(handler=run_synth)


def run_synth(args) -> int:
    with usage_errors():
        params = SynthParams(
            seed=args.seed,
            num_scenes=args.scenes,
            samples_per_scene=args.samples_per_scene,
            revisit_rate=args.revisit_rate,
            num_landmarks=args.landmarks,
            num_cameras=args.cameras,
            image_width=args.image_width,
            image_height=args.image_height,
        )
    manifest = generate_synthetic(params, args.out)
    emit({
        "dataset": str(args.out),
        "scenes": len(manifest.scenes),
        "samples": sum(len(scene) for scene in manifest.scenes),
        "cameras": len(manifest.rig),
        "generator": params.to_dict(),
    })
    return 0
