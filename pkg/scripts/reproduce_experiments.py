"""
Reproduce the benchmark protocol.
Runs `bench` on every synthetic generator and the pivot-quality experiment
on uniform data, writing one CSV per experiment into an output directory.
"""
import argparse
import sys
from pathlib import Path

from dotenv import load_dotenv

# Add parent directory to path for imports
sys.path.append(str(Path(__file__).parent.parent))

# Load environment variables (LPS_* settings)
load_dotenv()

from app.config.algorithms import ALGORITHMS  # noqa: E402
from app.config.datasets import DATASETS, get_dataset_display_name  # noqa: E402
from app.config.log import configure_logging  # noqa: E402
from app.config.settings import get_settings  # noqa: E402
from app.services import bench  # noqa: E402

FAST_ALGORITHMS = ["aips2o", "learnedsort-classic", "reference"]


def reproduce(out_dir: Path, n: int, runs: int, workers: int, seed: int, include_classic: bool) -> bool:
    """Run every experiment; returns False if any output failed verification."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = get_settings().sort_config(workers=workers, seed=seed)
    algorithms = list(ALGORITHMS) if include_classic else FAST_ALGORITHMS
    all_verified = True

    for dataset in DATASETS:
        print(f"📊 bench {get_dataset_display_name(dataset)} (n={n}, runs={runs}, workers={workers})")
        report = bench.bench_dataset(algorithms, dataset, n, runs, cfg, stop_on_failure=False)
        bench.write_bench_csv(report, out_dir / f"bench_{dataset}.csv")
        all_verified = all_verified and report.all_verified

    print("📐 pivot quality on uniform data")
    result = bench.run_pivot_quality("uniform", n, 255, 10, seed, cfg)
    bench.write_pivot_quality_csv(result, out_dir / "pivot_quality_uniform.csv")
    print(f"   random {result.mean_random:.4f}, learned {result.mean_learned:.4f}, ratio {result.ratio:.3f}")
    return all_verified


def main() -> int:
    parser = argparse.ArgumentParser(description="Run the benchmark protocol and write CSVs.")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--n", type=int, default=1_000_000)
    parser.add_argument("--runs", type=int, default=get_settings().default_runs)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=get_settings().default_seed)
    parser.add_argument("--classic", action="store_true", help="also time the classic learned quicksorts")
    args = parser.parse_args()

    configure_logging()
    ok = reproduce(Path(args.out), args.n, args.runs, args.workers, args.seed, args.classic)
    if not ok:
        print("❌ some runs failed verification")
        return 1
    print(f"✅ results written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
