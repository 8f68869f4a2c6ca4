"""
describe: compute baseline descriptors for a dataset, or import external ones.
"""
import logging

from fusionpr import config
from fusionpr.commands.common import add_command, emit, get_threads, require_path, usage_errors
from fusionpr.dataio import load_dataset
from fusionpr.descriptor import DescriptorConfig, describe_dataset, export_descriptors, import_descriptors
from fusionpr.errors import UsageError

logger = logging.getLogger(__name__)

METHODS = ["baseline", "import"]


def register(subparsers, parents):
    parser = add_command(subparsers, "describe", "write a descriptor file for every dataset sample", parents)
    parser.add_argument("--dataset", required=True, help="dataset directory or manifest")
    parser.add_argument("--method", choices=METHODS, default="baseline", help="descriptor source")
    parser.add_argument("--input", default=None, help="descriptor file to import (--method import)")
    parser.add_argument("--out", required=True, help="output descriptor file")
    parser.add_argument("--range-bins", type=int, default=config.DESCRIPTOR_RANGE_BINS,
                        help="histogram bins per range-image row")
    parser.add_argument("--use-color", action="store_true",
                        help="split bins between range and hue of the rendered colors")
    parser.set_defaults(handler=run_describe)


def run_describe(args) -> int:
    threads = get_threads(args)
    dataset = load_dataset(require_path(args.dataset, "--dataset"), check_files=False)

    if args.method == "import":
        if not args.input:
            raise UsageError("--method import needs --input")
        descriptors = import_descriptors(require_path(args.input, "--input"))
        missing = [i for i in dataset.sample_ids if i not in descriptors]
        if missing:
            logger.warning("%d dataset samples have no imported descriptor (first: %s)", len(missing), missing[0])
    else:
        rows = dataset.spherical.height
        with usage_errors():
            cfg = DescriptorConfig(dim=rows * args.range_bins, rows=rows, range_bins=args.range_bins,
                                   r_min=dataset.spherical.r_min, r_max=dataset.spherical.r_max,
                                   use_color=args.use_color)
        descriptors = describe_dataset(dataset, cfg, threads=threads)

    export_descriptors(descriptors, args.out)
    emit({"method": args.method, "descriptors": len(descriptors), "dim": descriptors.dim, "out": str(args.out)})
    return 0
