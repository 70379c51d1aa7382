"""
Tests for the benchmark harness and the pivot-quality experiment.
"""
import csv
import itertools
import time

import numpy as np
import pytest

from app.models.schemas import SortConfig
from app.services import bench
from app.services.exceptions import UnknownAlgorithmError, VerificationError

ALL_ALGORITHMS = list(bench.SORT_RUNNERS)


def _stepping_clock(step=100):
    ticks = itertools.count(0, step)
    return lambda: next(ticks)


def test_records_and_summaries_per_algorithm(rng):
    keys = rng.integers(0, 1 << 64, size=2_000, dtype=np.uint64)
    report = bench.run_bench(["aips2o", "reference"], keys, "random", 3, SortConfig(), clock=_stepping_clock())
    assert len(report.records) == 6
    assert report.all_verified
    assert [r.run_index for r in report.records] == [0, 1, 2, 0, 1, 2]
    assert all(r.elapsed_ns == 100 for r in report.records)
    assert {s.algorithm for s in report.summaries} == {"aips2o", "reference"}
    for summary in report.summaries:
        assert summary.runs == 3
        assert summary.mean_elapsed_ns == 100.0
        assert summary.std_elapsed_ns == 0.0


def test_input_is_left_untouched(rng):
    keys = rng.integers(0, 1000, size=500, dtype=np.uint64)
    original = keys.copy()
    bench.run_bench(["aips2o"], keys, "random", 1, SortConfig())
    assert np.array_equal(keys, original)


def test_single_run_on_two_keys_for_every_algorithm():
    keys = np.array([5, 3], dtype=np.uint64)
    report = bench.run_bench(ALL_ALGORITHMS, keys, "pair", 1, SortConfig())
    assert report.all_verified
    assert all(s.std_elapsed_ns == 0.0 for s in report.summaries)
    assert len(report.summaries) == len(ALL_ALGORITHMS)


def test_unknown_algorithm_fails_before_any_run():
    keys = np.arange(10, dtype=np.uint64)
    with pytest.raises(UnknownAlgorithmError, match="Available"):
        bench.run_bench(["reference", "bogosort"], keys, "ramp", 1, SortConfig())


def test_runs_must_be_positive():
    with pytest.raises(ValueError):
        bench.run_bench(["reference"], np.arange(10, dtype=np.uint64), "ramp", 0, SortConfig())


def test_timer_excludes_dataset_loading():
    def slow_loader(dataset, n, seed):
        time.sleep(0.3)
        return dataset, np.arange(n, dtype=np.uint64)[::-1].copy()

    report = bench.bench_dataset(["reference"], "slow", 1_000, 1, SortConfig(), loader=slow_loader)
    assert report.records[0].dataset == "slow"
    assert report.records[0].elapsed_ns < 200_000_000


def _unsorting_runner(keys, cfg):
    keys[:] = np.sort(keys)[::-1]


def _lossy_runner(keys, cfg):
    keys.sort()
    keys[0] = keys[1]


def test_unsorted_output_raises(monkeypatch):
    monkeypatch.setitem(bench.SORT_RUNNERS, "reference", _unsorting_runner)
    with pytest.raises(VerificationError, match="violation at index 1"):
        bench.run_bench(["reference"], np.arange(10, dtype=np.uint64), "ramp", 1, SortConfig())


def test_lost_key_is_reported_without_stopping(monkeypatch):
    monkeypatch.setitem(bench.SORT_RUNNERS, "reference", _lossy_runner)
    report = bench.run_bench(
        ["reference"], np.arange(10, dtype=np.uint64), "ramp", 2, SortConfig(), stop_on_failure=False
    )
    assert len(report.records) == 2
    assert not report.all_verified
    assert report.summaries == []


def test_bench_csv(tmp_path, rng):
    keys = rng.integers(0, 1 << 32, size=1_000, dtype=np.uint64)
    report = bench.run_bench(["reference"], keys, "random", 2, SortConfig())
    path = tmp_path / "bench.csv"
    bench.write_bench_csv(report, path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == bench.BENCH_HEADER
    assert [row[4] for row in rows[1:]] == ["0", "1", "mean", "std"]
    assert all(row[7] == "true" for row in rows[1:])


# =====================
# Pivot quality
# =====================

def _perfect_picker(keys, b, rng):
    ordered = np.sort(keys)
    return ordered[np.arange(1, b) * keys.size // b - 1]


def test_perfect_pivots_score_zero():
    result = bench.run_pivot_quality("uniform", 1024, 255, 2, seed=1, learned_picker=_perfect_picker)
    assert len(result.trials) == 2
    assert result.mean_learned == 0.0
    assert result.mean_random > 0.0
    assert result.ratio == 0.0
    assert all(t.learned.pivot_count == 255 and not t.learned.shortfall for t in result.trials)


def test_pivot_quality_is_deterministic():
    first = bench.run_pivot_quality("normal", 20_000, 63, 1, seed=5)
    second = bench.run_pivot_quality("normal", 20_000, 63, 1, seed=5)
    assert first.mean_random == second.mean_random
    assert first.mean_learned == second.mean_learned


def test_shortfall_is_scored_against_actual_pivots():
    def sparse_picker(keys, b, rng):
        return np.sort(keys)[[keys.size // 2 - 1]]

    result = bench.run_pivot_quality("uniform", 1000, 15, 1, learned_picker=sparse_picker)
    report = result.trials[0].learned
    assert report.pivot_count == 1
    assert report.requested_pivots == 15
    assert report.shortfall
    assert report.distance == 0.0


def test_pivot_quality_csv(tmp_path):
    result = bench.run_pivot_quality("uniform", 1024, 255, 2, seed=1, learned_picker=_perfect_picker)
    path = tmp_path / "pivots.csv"
    bench.write_pivot_quality_csv(result, path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == bench.PIVOT_HEADER
    assert len(rows) == 1 + 2 * 2 + 2
    assert rows[-1][:2] == ["mean", "learned"]


@pytest.mark.slow
def test_learned_pivots_beat_random_sampling_on_uniform_data():
    result = bench.run_pivot_quality("uniform", 1_000_000, 255, 10, seed=0)
    wins = sum(t.learned.distance < t.random.distance for t in result.trials)
    assert wins >= 9
    assert result.ratio <= 0.7
