"""
split: organize a dataset into training tuples and test ground truth.
"""
import logging

from fusionpr import config
from fusionpr.benchmark import (
    SCHEMES,
    SCHEME_SUPERVISED,
    SelfSupervisedParams,
    SupervisedParams,
    build_selfsupervised_split,
    build_supervised_split,
)
from fusionpr.commands.common import add_command, emit, get_threads, iso_date, require_path, usage_errors
from fusionpr.dataio import load_dataset, write_split

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = add_command(subparsers, "split", "build train/test splits (supervised or self-supervised)", parents)
    parser.add_argument("scheme", choices=SCHEMES, help="data organization scheme")
    parser.add_argument("--dataset", required=True, help="dataset directory or manifest")
    parser.add_argument("--out", required=True, help="directory receiving train.json and test.json")
    parser.add_argument("--delta", type=float, default=config.DELTA_M,
                        help="database admission distance (m, supervised)")
    parser.add_argument("--gamma", type=iso_date, default=None,
                        help="date threshold (ISO-8601); overrides --gamma-days")
    parser.add_argument("--gamma-days", type=int, default=config.GAMMA_DAYS,
                        help="date threshold as days after the earliest scene date")
    parser.add_argument("--rho-pos", type=float, default=config.RHO_POS_M, help="positive radius (m)")
    parser.add_argument("--rho-neg", type=float, default=config.RHO_NEG_M,
                        help="negative radius (m, supervised)")
    parser.add_argument("--sigma-neg", type=int, default=config.SIGMA_NEG,
                        help="negative time threshold (samples, self-supervised)")
    parser.add_argument("--n-pos", type=int, default=config.N_POS, help="positives per tuple")
    parser.add_argument("--n-neg", type=int, default=config.N_NEG, help="negatives per tuple")
    parser.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="random seed")
    parser.add_argument("--val-fraction", type=float, default=config.VAL_FRACTION,
                        help="share of test queries held out for validation")
    parser.add_argument("--mode", choices=config.MINING_MODES, default="faithful",
                        help="self-supervised negative buffer handling")
    parser.set_defaults(handler=run_split)


def run_split(args) -> int:
    threads = get_threads(args)
    with usage_errors():
        if args.scheme == SCHEME_SUPERVISED:
            params = SupervisedParams(
                delta=args.delta, gamma=args.gamma, gamma_days=args.gamma_days,
                rho_pos=args.rho_pos, rho_neg=args.rho_neg, n_pos=args.n_pos, n_neg=args.n_neg,
                seed=args.seed, val_fraction=args.val_fraction,
            )
        else:
            params = SelfSupervisedParams(
                gamma=args.gamma, gamma_days=args.gamma_days, rho_pos=args.rho_pos,
                sigma_neg=args.sigma_neg, n_pos=args.n_pos, n_neg=args.n_neg,
                seed=args.seed, mode=args.mode, val_fraction=args.val_fraction,
            )
    dataset = load_dataset(require_path(args.dataset, "--dataset"), check_files=False)

    if args.scheme == SCHEME_SUPERVISED:
        split = build_supervised_split(dataset.scenes, params, threads=threads)
    else:
        split = build_selfsupervised_split(dataset.scenes, params)
    train_path, test_path = write_split(split, args.out)
    logger.info("wrote %s and %s", train_path, test_path)
    emit({
        "scheme": split.scheme,
        "params": split.params,
        "summary": split.summary,
        "train": str(train_path),
        "test": str(test_path),
    })
    return 0
