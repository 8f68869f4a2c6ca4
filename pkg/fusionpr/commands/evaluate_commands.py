"""
evaluate: AR@x of a descriptor file on a test split.
"""
from pathlib import Path

from fusionpr import config
from fusionpr.benchmark import select_subset
from fusionpr.commands.common import add_command, emit, get_threads, parse_ks, require_path
from fusionpr.dataio import read_test_split, resolve_split_paths
from fusionpr.descriptor import import_descriptors
from fusionpr.retrieval import build_index, evaluate_recall
from fusionpr.serialization import dump_json


def register(subparsers, parents):
    parser = add_command(subparsers, "evaluate", "average recall at x on a test split", parents)
    parser.add_argument("--descriptors", required=True, help="descriptor file")
    parser.add_argument("--split", required=True, help="split directory or test.json")
    parser.add_argument("--topk", default=",".join(str(k) for k in config.RECALL_KS),
                        help="comma-separated x values")
    parser.add_argument("--subset", choices=config.EVAL_SUBSETS, default="test",
                        help="queries to score (test excludes the validation ids)")
    parser.add_argument("--out", required=True, help="report JSON path; a .csv with x, AR is written next to it")
    parser.add_argument("--xlsx", default=None, help="optional styled Excel report path")
    parser.set_defaults(handler=run_evaluate)


def run_evaluate(args) -> int:
    ks = parse_ks(args.topk)
    threads = get_threads(args)
    descriptors = import_descriptors(require_path(args.descriptors, "--descriptors"))
    _, test_path = resolve_split_paths(require_path(args.split, "--split"))
    test = read_test_split(require_path(test_path, "--split"))

    index = build_index(descriptors, test.database)
    entries = select_subset(test.entries, test.validation, args.subset)
    report = evaluate_recall(index, entries, descriptors, ks, subset=args.subset, threads=threads)

    out = Path(args.out)
    dump_json(report.to_dict(), out)
    report.write_csv(out.with_suffix(".csv"))
    if args.xlsx:
        report.write_xlsx(args.xlsx)
    emit({
        "n_query": report.n_query,
        "excluded_empty_gt": report.excluded_empty_gt,
        "recall": {str(k): v for k, v in report.recalls.items()},
        "random_baseline": {str(k): v for k, v in report.random_baseline.items()},
        "report": str(out),
    })
    return 0
