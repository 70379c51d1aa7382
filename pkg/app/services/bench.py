"""
Benchmark harness shared by the CLI, the HTTP routers and the reproduce script.

Each run sorts a fresh copy of the input; the timer wraps only the sort
call, so model training is included and dataset generation and file I/O
are not. Outputs are verified for order and for multiset equality before a
record can enter the summaries.
"""
import csv
import logging
import statistics
import time
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from app.config.algorithms import ALGORITHMS
from app.models.schemas import (
    BenchRecord,
    BenchReport,
    BenchSummary,
    PivotQualityReport,
    PivotQualityResult,
    PivotQualityTrial,
    SortConfig,
)
from app.services import classic, sorter
from app.services.cdf_models import train_rmi
from app.services.datasets import load_dataset
from app.services.exceptions import UnknownAlgorithmError, VerificationError
from app.services.keys import KeyArray

logger = logging.getLogger(__name__)

BENCH_HEADER = ["algorithm", "dataset", "n", "workers", "run", "elapsed_ns", "keys_per_second", "verified"]
PIVOT_HEADER = ["trial", "method", "pivot_count", "requested_pivots", "distance", "shortfall"]

SortRunner = Callable[[KeyArray, SortConfig], None]
Clock = Callable[[], int]
DatasetLoader = Callable[[str, int, int], Tuple[str, KeyArray]]
PivotPicker = Callable[[KeyArray, int, np.random.Generator], KeyArray]


# =====================
# Algorithm runners
# =====================

def _run_hybrid(keys: KeyArray, cfg: SortConfig) -> None:
    sorter.sort(keys, cfg)


def _run_classic_learnedsort(keys: KeyArray, cfg: SortConfig) -> None:
    sorter.learned_sort_classic(keys, cfg)


def _run_learned_quicksort(keys: KeyArray, cfg: SortConfig) -> None:
    classic.learned_quicksort(keys, cfg.insertion_base_case, seed=cfg.seed)


def _run_quicksort_learned_pivot(keys: KeyArray, cfg: SortConfig) -> None:
    classic.quicksort_learned_pivot(keys, cfg.insertion_base_case, seed=cfg.seed)


def _run_reference(keys: KeyArray, cfg: SortConfig) -> None:
    sorter.reference_sort(keys)


SORT_RUNNERS: Dict[str, SortRunner] = {
    "aips2o": _run_hybrid,
    "learnedsort-classic": _run_classic_learnedsort,
    "learned-quicksort": _run_learned_quicksort,
    "quicksort-learned-pivot": _run_quicksort_learned_pivot,
    "reference": _run_reference,
}


def get_runner(name: str) -> SortRunner:
    runner = SORT_RUNNERS.get(name)
    if runner is None:
        raise UnknownAlgorithmError(name, ALGORITHMS)
    return runner


def run_algorithm(name: str, keys: KeyArray, cfg: SortConfig, clock: Clock = time.perf_counter_ns) -> int:
    """Sort keys in place with a registry algorithm; returns elapsed nanoseconds."""
    runner = get_runner(name)
    start = clock()
    runner(keys, cfg)
    return clock() - start


# =====================
# Benchmarks
# =====================

def summarize_records(records: Iterable[BenchRecord]) -> List[BenchSummary]:
    """Mean and standard deviation per (algorithm, dataset) over verified records."""
    groups: Dict[Tuple[str, str], List[BenchRecord]] = {}
    for record in records:
        if record.verified:
            groups.setdefault((record.algorithm, record.dataset), []).append(record)
    summaries = []
    for (algorithm, dataset), group in groups.items():
        elapsed = [float(r.elapsed_ns) for r in group]
        rates = [r.keys_per_second for r in group]
        summaries.append(BenchSummary(
            algorithm=algorithm,
            dataset=dataset,
            n=group[0].n,
            workers=group[0].workers,
            runs=len(group),
            mean_elapsed_ns=statistics.fmean(elapsed),
            std_elapsed_ns=statistics.stdev(elapsed) if len(elapsed) > 1 else 0.0,
            mean_keys_per_second=statistics.fmean(rates),
            std_keys_per_second=statistics.stdev(rates) if len(rates) > 1 else 0.0,
        ))
    return summaries


def run_bench(
    algorithms: List[str],
    keys: KeyArray,
    dataset: str,
    runs: int,
    cfg: SortConfig,
    stop_on_failure: bool = True,
    clock: Clock = time.perf_counter_ns,
) -> BenchReport:
    """
    Time every algorithm on fresh copies of keys.

    Args:
        algorithms: registry names, validated before any run starts
        keys: input keys (left untouched)
        dataset: label written to each record
        runs: runs per algorithm
        cfg: configuration handed to every algorithm
        stop_on_failure: raise VerificationError on the first bad output
        clock: monotonic nanosecond clock

    Returns:
        BenchReport with one record per run and summaries of verified runs

    Raises:
        UnknownAlgorithmError: an algorithm is not registered
        VerificationError: an output is unsorted or not a permutation (with stop_on_failure)
    """
    for name in algorithms:
        get_runner(name)
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")

    expected = sorter.multiset_fingerprint(keys)
    records: List[BenchRecord] = []
    for name in algorithms:
        for run in range(runs):
            work = keys.copy()
            elapsed = run_algorithm(name, work, cfg, clock)
            check = sorter.verify_sorted(work)
            same_keys = sorter.multiset_fingerprint(work) == expected
            record = BenchRecord(
                algorithm=name,
                dataset=dataset,
                n=int(keys.size),
                workers=cfg.workers,
                run_index=run,
                elapsed_ns=elapsed,
                verified=check.ok and same_keys,
            )
            records.append(record)
            logger.info(
                "%s on %s (n=%d) run %d: %.3f ms, %.0f keys/s",
                name, dataset, keys.size, run, elapsed / 1e6, record.keys_per_second,
            )
            if not record.verified:
                reason = f"violation at index {check.index}" if not check.ok else "output is not a permutation of the input"
                logger.error("%s on %s run %d failed verification: %s", name, dataset, run, reason)
                if stop_on_failure:
                    raise VerificationError(f"{name} on {dataset}: {reason}", check.index)
    return BenchReport(records=records, summaries=summarize_records(records))


def bench_dataset(
    algorithms: List[str],
    dataset: str,
    n: int,
    runs: int,
    cfg: SortConfig,
    loader: DatasetLoader = load_dataset,
    stop_on_failure: bool = True,
) -> BenchReport:
    """Load or generate the dataset outside the timed region, then run_bench."""
    label, keys = loader(dataset, n, cfg.seed)
    return run_bench(algorithms, keys, label, runs, cfg, stop_on_failure=stop_on_failure)


def write_bench_csv(report: BenchReport, path: Union[str, Path]) -> None:
    """Per-run rows, then a mean row and a std row for each summary."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(BENCH_HEADER)
        for r in report.records:
            writer.writerow([
                r.algorithm, r.dataset, r.n, r.workers, r.run_index,
                r.elapsed_ns, f"{r.keys_per_second:.1f}", str(r.verified).lower(),
            ])
        for s in report.summaries:
            writer.writerow([
                s.algorithm, s.dataset, s.n, s.workers, "mean",
                f"{s.mean_elapsed_ns:.1f}", f"{s.mean_keys_per_second:.1f}", "true",
            ])
            writer.writerow([
                s.algorithm, s.dataset, s.n, s.workers, "std",
                f"{s.std_elapsed_ns:.1f}", f"{s.std_keys_per_second:.1f}", "true",
            ])


# =====================
# Pivot quality
# =====================

def learned_pivots(keys: KeyArray, b: int, rng: np.random.Generator, cfg: Optional[SortConfig] = None) -> KeyArray:
    """Implicit pivots of an RMI trained on a sample, as used by the learned partition."""
    cfg = cfg or SortConfig()
    size = min(keys.size, cfg.rmi_sample_size(keys.size))
    sample = np.sort(keys[rng.integers(0, keys.size, size=size)])
    rmi = train_rmi(sample, sorter.submodel_count(cfg, sample.size))
    return classic.learned_pivots_for_samplesort(keys, rmi, b)


def _score(a_sorted: KeyArray, pivots: KeyArray, requested: int, method: str) -> PivotQualityReport:
    if pivots.size < requested:
        logger.warning("%s pivots: got %d of %d requested", method, pivots.size, requested)
    report = classic.pivot_quality(a_sorted, pivots, pivots.size + 1, method=method)
    return report.model_copy(update={"requested_pivots": requested})


def run_pivot_quality(
    dataset: str,
    n: int,
    pivots: int,
    trials: int,
    seed: int = 0,
    cfg: Optional[SortConfig] = None,
    loader: DatasetLoader = load_dataset,
    learned_picker: Optional[PivotPicker] = None,
) -> PivotQualityResult:
    """
    Score random-sample pivots against RMI-implicit pivots on the same data.

    Args:
        dataset: generator name or key file
        n: number of keys
        pivots: pivots per method (b - 1)
        trials: independent trials, each with its own seeded generator
        seed: base seed of the dataset and of every trial
        cfg: sample sizes and RMI fan-out
        loader: dataset loader
        learned_picker: replaces learned_pivots, for tests

    Returns:
        PivotQualityResult with per-trial reports and per-method means
    """
    if pivots < 1 or trials < 1:
        raise ValueError("pivots and trials must be >= 1")
    cfg = cfg or SortConfig(seed=seed)
    label, keys = loader(dataset, n, seed)
    a_sorted = np.sort(keys)
    b = pivots + 1
    picker = learned_picker or (lambda k, buckets, rng: learned_pivots(k, buckets, rng, cfg))

    results = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        random_report = _score(a_sorted, classic.random_pivots(keys, b, rng), pivots, "random")
        learned_report = _score(a_sorted, picker(keys, b, rng), pivots, "learned")
        results.append(PivotQualityTrial(trial=trial, random=random_report, learned=learned_report))
        logger.info(
            "pivot quality trial %d: random %.4f, learned %.4f",
            trial, random_report.distance, learned_report.distance,
        )
    return PivotQualityResult(
        dataset=label,
        n=int(keys.size),
        pivots=pivots,
        seed=seed,
        trials=results,
        mean_random=statistics.fmean(t.random.distance for t in results),
        mean_learned=statistics.fmean(t.learned.distance for t in results),
    )


def write_pivot_quality_csv(result: PivotQualityResult, path: Union[str, Path]) -> None:
    """One row per trial and method, then a mean row per method."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PIVOT_HEADER)
        for t in result.trials:
            for report in (t.random, t.learned):
                writer.writerow([
                    t.trial, report.method, report.pivot_count, report.requested_pivots,
                    f"{report.distance:.6f}", str(report.shortfall).lower(),
                ])
        shortfall = any(t.learned.shortfall for t in result.trials)
        writer.writerow(["mean", "random", result.pivots, result.pivots, f"{result.mean_random:.6f}", "false"])
        writer.writerow(["mean", "learned", result.pivots, result.pivots, f"{result.mean_learned:.6f}", str(shortfall).lower()])
