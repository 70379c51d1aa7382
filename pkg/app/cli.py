"""
Command-line harness: dataset generation, benchmarks, pivot-quality
experiments, classic sorts and key file verification.

Exit status: 0 on success, 1 when a verification fails, 2 on bad input
(unknown names, malformed files, I/O errors).
"""
import argparse
import logging
import sys
import time
from typing import List, Optional

from app.config.algorithms import DEFAULT_ALGORITHM, get_algorithm_display_name, get_classic_algorithms
from app.config.datasets import DATASETS
from app.config.log import configure_logging
from app.config.settings import get_settings
from app.models.schemas import DatasetSpec, SortConfig
from app.services import bench, classic, sorter
from app.services.datasets import generate, load_dataset, read_keys, write_keys
from app.services.exceptions import VerificationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2


def _sort_config(args: argparse.Namespace) -> SortConfig:
    return get_settings().sort_config(
        seed=getattr(args, "seed", None),
        workers=getattr(args, "workers", None),
    )


# =====================
# Subcommands
# =====================

def cmd_generate(args: argparse.Namespace) -> int:
    """Generate a dataset and write it in the key file format."""
    spec = DatasetSpec(name=args.name, n=args.n, seed=args.seed)
    keys = generate(spec)
    write_keys(args.out_path, keys)
    print(f"wrote {keys.size} keys ({spec.name}, seed {spec.seed}) to {args.out_path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    """Time the chosen algorithms and write the CSV report."""
    algorithms = args.algo or ([args.algorithm] if args.algorithm else [DEFAULT_ALGORITHM])
    dataset = args.dataset or args.dataset_pos or "uniform"
    n = args.n or args.n_pos or 1_000_000
    runs = args.runs or args.runs_pos or get_settings().default_runs
    if args.workers is None:
        args.workers = args.workers_pos
    cfg = _sort_config(args)

    # A bad output raises VerificationError; main() reports its violating index.
    report = bench.bench_dataset(algorithms, dataset, n, runs, cfg)
    if args.csv:
        bench.write_bench_csv(report, args.csv)
        print(f"wrote {len(report.records)} records to {args.csv}")
    for summary in report.summaries:
        print(
            f"{summary.algorithm:<24} {summary.dataset:<12} n={summary.n} runs={summary.runs} "
            f"mean={summary.mean_elapsed_ns / 1e6:.3f} ms "
            f"rate={summary.mean_keys_per_second:.0f} keys/s"
        )
    return EXIT_OK


def cmd_pivot_quality(args: argparse.Namespace) -> int:
    """Compare random and RMI-implicit pivots."""
    cfg = _sort_config(args)
    result = bench.run_pivot_quality(args.dataset, args.n, args.pivots, args.trials, cfg.seed, cfg)
    if args.csv:
        bench.write_pivot_quality_csv(result, args.csv)
        print(f"wrote {len(result.trials)} trials to {args.csv}")
    print(f"random  mean distance {result.mean_random:.4f}")
    print(f"learned mean distance {result.mean_learned:.4f}")
    print(f"ratio learned/random  {result.ratio:.3f}")
    if any(t.learned.shortfall for t in result.trials):
        print("warning: the RMI produced fewer pivots than requested in some trials", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """Check that a key file is sorted."""
    keys = read_keys(args.path)
    check = sorter.verify_sorted(keys)
    if check.ok:
        print(f"{args.path}: {keys.size} keys, sorted")
        return EXIT_OK
    print(f"{args.path}: violation at index {check.index}")
    return EXIT_VERIFICATION


def cmd_classic_sort(args: argparse.Namespace) -> int:
    """Run one classic algorithm on a dataset, verify it and report the cost."""
    cfg = _sort_config(args)
    label, keys = load_dataset(args.dataset, args.n, cfg.seed)
    expected = sorter.multiset_fingerprint(keys)
    counter = classic.OperationCounter()
    stats = sorter.ClassicSortStats()

    start = time.perf_counter_ns()
    if args.algorithm == "learned-quicksort":
        classic.learned_quicksort(keys, args.base_case_size, seed=cfg.seed, counter=counter)
    elif args.algorithm == "quicksort-learned-pivot":
        classic.quicksort_learned_pivot(keys, args.base_case_size, seed=cfg.seed, counter=counter)
    else:
        sorter.learned_sort_classic(keys, cfg, stats)
    elapsed = time.perf_counter_ns() - start

    check = sorter.verify_sorted(keys)
    if not check.ok or sorter.multiset_fingerprint(keys) != expected:
        raise VerificationError(f"{args.algorithm} on {label}: violation at index {check.index}", check.index)
    print(f"{get_algorithm_display_name(args.algorithm)} on {label} (n={keys.size}): {elapsed / 1e6:.3f} ms, verified")
    if counter.total:
        print(f"element operations: {counter.total} "
              f"(predictions {counter.predictions}, swaps {counter.swaps}, comparisons {counter.comparisons})")
    if args.algorithm == "learnedsort-classic":
        print(f"fixup shifts: {stats.fixup_shifts}")
    if args.out:
        write_keys(args.out, keys)
    return EXIT_OK


# =====================
# Parser
# =====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lps", description="Learned partition sorting toolkit.")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset as a key file")
    gen.add_argument("name", help=", ".join(sorted(DATASETS)))
    gen.add_argument("n", type=int)
    gen.add_argument("seed", type=int, nargs="?", default=0)
    gen.add_argument("out_path")
    gen.set_defaults(handler=cmd_generate)

    run = sub.add_parser("bench", help="time sorting algorithms")
    run.add_argument("algorithm", nargs="?", help="single algorithm (same as one --algo)")
    run.add_argument("dataset_pos", nargs="?", metavar="dataset")
    run.add_argument("n_pos", nargs="?", type=int, metavar="n")
    run.add_argument("runs_pos", nargs="?", type=int, metavar="runs")
    run.add_argument("workers_pos", nargs="?", type=int, metavar="workers")
    run.add_argument("--algo", action="append", help="algorithm name, repeatable")
    run.add_argument("--dataset", help="generator name or key file")
    run.add_argument("--n", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--csv", help="CSV output path")
    run.set_defaults(handler=cmd_bench)

    quality = sub.add_parser("pivot-quality", help="random versus learned pivot quality")
    quality.add_argument("--dataset", default="uniform")
    quality.add_argument("--n", type=int, default=1_000_000)
    quality.add_argument("--pivots", type=int, default=255)
    quality.add_argument("--trials", type=int, default=10)
    quality.add_argument("--seed", type=int)
    quality.add_argument("--csv")
    quality.set_defaults(handler=cmd_pivot_quality)

    verify = sub.add_parser("verify", help="check that a key file is sorted")
    verify.add_argument("path")
    verify.set_defaults(handler=cmd_verify)

    classic_sort = sub.add_parser("classic-sort", help="run one classic learned sort")
    classic_sort.add_argument("--algo", dest="algorithm", choices=get_classic_algorithms(), default="learned-quicksort")
    classic_sort.add_argument("--dataset", default="uniform")
    classic_sort.add_argument("--n", type=int, default=100_000)
    classic_sort.add_argument("--seed", type=int)
    classic_sort.add_argument("--base-case-size", type=int, default=classic.BASE_CASE_SIZE)
    classic_sort.add_argument("--out", help="write the sorted keys to this key file")
    classic_sort.set_defaults(handler=cmd_classic_sort)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except VerificationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERIFICATION
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
