"""
loss: score one training tuple with the depth, triplet and reprojection losses.
"""
from fusionpr import config
from fusionpr.commands.common import add_command, emit, require_path, usage_errors
from fusionpr.dataio import load_dataset, read_train_split, resolve_split_paths
from fusionpr.descriptor import DescriptorConfig, describe_dataset, import_descriptors
from fusionpr.geometry import transform_points
from fusionpr.interaction import render_depth_maps, render_sparse_depth
from fusionpr.losses import (
    DEPTH_REDUCTIONS,
    REPROJECTION_REDUCTIONS,
    LossWeights,
    depth_loss,
    relative_lidar_pose,
    reprojection_loss,
    total_loss,
    triplet_loss,
)


def register(subparsers, parents):
    parser = add_command(subparsers, "loss", "evaluate the training losses on one tuple", parents)
    parser.add_argument("--dataset", required=True, help="dataset directory or manifest")
    parser.add_argument("--split", required=True, help="split directory or train.json")
    parser.add_argument("--tuple", required=True, dest="query", help="query id of the training tuple")
    parser.add_argument("--descriptors", default=None,
                        help="descriptor file (default: baseline descriptors computed on the fly)")
    parser.add_argument("--alpha", type=float, default=config.TRIPLET_MARGIN, help="triplet margin")
    parser.add_argument("--lambda-d", type=float, default=config.LAMBDA_DEPTH, help="depth loss weight")
    parser.add_argument("--lambda-t", type=float, default=config.LAMBDA_TRIPLET, help="triplet loss weight")
    parser.add_argument("--lambda-r", type=float, default=config.LAMBDA_REPROJECTION,
                        help="reprojection loss weight")
    parser.add_argument("--hinge", action="store_true", help="clamp the triplet loss at 0")
    parser.add_argument("--depth-reduction", choices=DEPTH_REDUCTIONS, default="sum",
                        help="depth loss reduction")
    parser.add_argument("--reprojection-reduction", choices=REPROJECTION_REDUCTIONS, default="sum",
                        help="reprojection loss reduction")
    parser.set_defaults(handler=run_loss)


def run_loss(args) -> int:
    with usage_errors():
        weights = LossWeights(args.lambda_d, args.lambda_t, args.lambda_r, args.alpha)
    dataset = load_dataset(require_path(args.dataset, "--dataset"), check_files=False)
    train_path, _ = resolve_split_paths(require_path(args.split, "--split"))
    train = read_train_split(require_path(train_path, "--split"))
    tup = train.tuple_for(args.query)

    query = dataset.load_sample(tup.query_id)
    positive = dataset.load_sample(tup.positive_ids[0])
    T_L = relative_lidar_pose(query.pose, positive.pose, dataset.T_ego_lidar)

    targets = render_sparse_depth(query.cloud, dataset.rig, dataset.T_ego_lidar)
    moved = transform_points(positive.cloud, T_L)
    depth_maps = render_depth_maps(render_sparse_depth(moved, dataset.rig, dataset.T_ego_lidar), dataset.rig)
    ld = depth_loss(targets, depth_maps, reduction=args.depth_reduction)
    lr = reprojection_loss(positive.cloud, query.cloud, T_L, dataset.spherical,
                           reduction=args.reprojection_reduction)

    # faithful self-supervised tuples may repeat ids across and within positives and negatives
    ids = list(dict.fromkeys([tup.query_id, *tup.positive_ids, *tup.negative_ids]))
    if args.descriptors:
        descriptors = import_descriptors(require_path(args.descriptors, "--descriptors"))
    else:
        rows = dataset.spherical.height
        cfg = DescriptorConfig(dim=rows * config.DESCRIPTOR_RANGE_BINS, rows=rows,
                               r_min=dataset.spherical.r_min, r_max=dataset.spherical.r_max)
        descriptors = describe_dataset(dataset, cfg, ids=ids)
    lt = triplet_loss(descriptors.get(tup.query_id),
                      [descriptors.get(i) for i in tup.positive_ids],
                      [descriptors.get(i) for i in tup.negative_ids],
                      alpha=weights.alpha, hinge=args.hinge)

    emit({
        "query": tup.query_id,
        "positives": list(tup.positive_ids),
        "negatives": list(tup.negative_ids),
        "L_d": ld,
        "L_t": lt,
        "L_r": lr,
        "total": total_loss(ld, lt, lr, weights),
        "weights": {"lambda_d": weights.lambda_d, "lambda_t": weights.lambda_t,
                    "lambda_r": weights.lambda_r, "alpha": weights.alpha},
        "hinge": args.hinge,
        "depth_reduction": args.depth_reduction,
        "reprojection_reduction": args.reprojection_reduction,
    })
    return 0
