"""
Tests for the hybrid sorter, the classic LearnedSort path and the base cases.
"""
import os
import time

import numpy as np
import pytest

from app.models.schemas import SortConfig
from app.services.cdf_models import LearnedPartition, TreePartition, train_rmi
from app.services.keys import decode_floats
from app.services.sorter import (
    ClassicSortStats,
    colliding_pairs,
    SortStats,
    build_partition_model,
    heapsort_fallback,
    insertion_sort,
    learned_sort_classic,
    model_counting_sort,
    multiset_fingerprint,
    radix_base_case_sort,
    sort,
    verify_sorted,
)

DISTRIBUTIONS = ["uniform", "normal", "lognormal", "mixgauss", "exponential", "chisquared", "rootdups", "twodups", "zipf"]


# =====================
# Verification helpers
# =====================

def test_verify_sorted():
    assert verify_sorted(np.array([1, 2, 2, 3], dtype=np.uint64)) == (True, -1)
    assert verify_sorted(np.array([2, 1], dtype=np.uint64)) == (False, 1)
    assert verify_sorted(np.array([], dtype=np.uint64)).ok


def test_fingerprint_ignores_order_but_not_content(rng):
    keys = rng.integers(0, 1 << 64, size=1000, dtype=np.uint64)
    shuffled = rng.permutation(keys)
    assert multiset_fingerprint(keys) == multiset_fingerprint(shuffled)
    changed = keys.copy()
    changed[0] ^= np.uint64(1)
    assert multiset_fingerprint(keys) != multiset_fingerprint(changed)


# =====================
# Base cases
# =====================

def test_insertion_sort_counts_shifts():
    segment = np.array([3, 1, 2], dtype=np.uint64)
    assert insertion_sort(segment) == 2
    assert segment.tolist() == [1, 2, 3]
    assert insertion_sort(segment) == 0


def test_radix_orders_by_byte_value():
    segment = np.array([0x0100, 0x0001], dtype=np.uint64)
    radix_base_case_sort(segment, insertion_base_case=1)
    assert segment.tolist() == [0x0001, 0x0100]


def test_radix_matches_reference(rng):
    segment = rng.integers(0, 1 << 64, size=4096, dtype=np.uint64)
    expected = np.sort(segment)
    radix_base_case_sort(segment)
    assert np.array_equal(segment, expected)


def test_radix_handles_shared_prefixes_and_duplicates(rng):
    segment = (np.uint64(0xABCD) << np.uint64(48)) | rng.integers(0, 300, size=4000, dtype=np.uint64)
    expected = np.sort(segment)
    radix_base_case_sort(segment)
    assert np.array_equal(segment, expected)


def test_radix_leaves_equal_segment_alone():
    segment = np.full(1000, 77, dtype=np.uint64)
    radix_base_case_sort(segment)
    assert np.all(segment == 77)


def test_heapsort_fallback(rng):
    segment = rng.integers(0, 1 << 64, size=3000, dtype=np.uint64)
    expected = np.sort(segment)
    heapsort_fallback(segment)
    assert np.array_equal(segment, expected)


# =====================
# Model selection
# =====================

def test_uniform_million_selects_learned_partition(make_dataset):
    keys = make_dataset("uniform", 1_000_000, seed=1)
    model = build_partition_model(keys, SortConfig(), np.random.default_rng(0))
    assert isinstance(model, LearnedPartition)
    assert model.bucket_count == 1024


def test_rootdups_million_selects_tree(make_dataset):
    keys = make_dataset("rootdups", 1_000_000)
    model = build_partition_model(keys, SortConfig(), np.random.default_rng(0))
    assert isinstance(model, TreePartition)


@pytest.mark.parametrize("name", ["uniform", "normal", "zipf"])
def test_small_inputs_select_tree(name, make_dataset):
    keys = make_dataset(name, 10_000)
    model = build_partition_model(keys, SortConfig(), np.random.default_rng(0))
    assert isinstance(model, TreePartition)


# =====================
# Hybrid sort
# =====================

def test_empty_and_single_element():
    empty = np.array([], dtype=np.uint64)
    assert sort(empty).size == 0
    single = np.array([5], dtype=np.uint64)
    assert sort(single).tolist() == [5]


def test_sorts_in_place():
    keys = np.array([5, 3, 9, 1], dtype=np.uint64)
    result = sort(keys)
    assert result is keys
    assert keys.tolist() == [1, 3, 5, 9]


def test_float_input_returns_sorted_keys(rng):
    values = rng.normal(size=5000)
    keys = sort(values)
    assert np.array_equal(decode_floats(keys), np.sort(values))


@pytest.mark.parametrize("n", [1_000, 100_000])
@pytest.mark.parametrize("name", DISTRIBUTIONS)
def test_sort_matches_reference(name, n, make_dataset):
    keys = make_dataset(name, n, seed=5)
    expected = np.sort(keys)
    sort(keys)
    assert np.array_equal(keys, expected)


@pytest.mark.slow
@pytest.mark.parametrize("name", DISTRIBUTIONS)
def test_sort_matches_reference_at_one_million(name, make_dataset):
    keys = make_dataset(name, 1_000_000, seed=5)
    expected = np.sort(keys)
    sort(keys)
    assert np.array_equal(keys, expected)


@pytest.mark.parametrize("case", ["sorted", "reversed", "all_equal", "organ_pipe", "near_constant"])
def test_sort_adversarial_inputs(case, adversarial, small_config):
    keys = adversarial(50_000)[case]
    expected = np.sort(keys)
    sort(keys, small_config)
    assert np.array_equal(keys, expected)


def test_small_config_exercises_both_variants(make_dataset, small_config):
    keys = make_dataset("uniform", 100_000, seed=8)
    stats = SortStats()
    expected = np.sort(keys)
    sort(keys, small_config, stats=stats)
    assert np.array_equal(keys, expected)
    assert stats.learned_partitions >= 1
    assert stats.tree_partitions >= 1


def test_homogeneous_buckets_are_skipped(make_dataset, small_config):
    keys = make_dataset("rootdups", 10_000)
    stats = SortStats()
    sort(keys, small_config, stats=stats)
    assert verify_sorted(keys).ok
    assert stats.skipped_homogeneous >= 1


def _everything_to_bucket_zero(segment, cfg, rng):
    rmi = train_rmi(np.array([1 << 63, (1 << 64) - 1], dtype=np.uint64), 1)
    return LearnedPartition(rmi, 4)


def test_adversarial_model_hits_depth_cap(rng):
    keys = rng.integers(0, 1 << 62, size=20_000, dtype=np.uint64)
    expected = np.sort(keys)
    stats = SortStats()
    sort(keys, SortConfig(radix_base_case=1024), model_builder=_everything_to_bucket_zero, stats=stats)
    assert np.array_equal(keys, expected)
    assert stats.heapsort_fallbacks == 1


@pytest.mark.slow
def test_adversarial_model_stays_within_ten_times_normal():
    keys = np.random.default_rng(1).integers(0, 1 << 62, size=1_000_000, dtype=np.uint64)
    normal = keys.copy()
    start = time.perf_counter()
    sort(normal)
    normal_time = time.perf_counter() - start

    stats = SortStats()
    start = time.perf_counter()
    sort(keys, model_builder=_everything_to_bucket_zero, stats=stats)
    adversarial_time = time.perf_counter() - start
    assert np.array_equal(keys, normal)
    assert stats.heapsort_fallbacks == 1
    assert adversarial_time <= 10 * normal_time


def test_forwarded_model_counting_base_case(make_dataset):
    cfg = SortConfig(min_rmi_input=10_000, rmi_bucket_count=64, forward_rmi=True)
    keys = make_dataset("lognormal", 100_000, seed=2)
    stats = SortStats()
    expected = np.sort(keys)
    sort(keys, cfg, stats=stats)
    assert np.array_equal(keys, expected)
    assert stats.counting_base_cases >= 1


@pytest.mark.parametrize("name", ["uniform", "rootdups", "zipf"])
def test_parallel_and_sequential_agree(name, make_dataset):
    keys = make_dataset(name, 300_000, seed=9)
    sequential = keys.copy()
    parallel = keys.copy()
    # Small learned fan-out so the buckets are large enough for the process pool.
    cfg = SortConfig(rmi_bucket_count=16, radix_base_case=1024)
    sort(sequential, cfg)
    sort(parallel, cfg.model_copy(update={"workers": 4}))
    assert verify_sorted(parallel).ok
    assert multiset_fingerprint(parallel) == multiset_fingerprint(keys)
    assert np.array_equal(sequential, parallel)


def test_stats_merge_sums_counters_and_keeps_deepest():
    total = SortStats(partitions=2, radix_base_cases=5, max_depth=3)
    total.merge(SortStats(partitions=1, radix_base_cases=4, skipped_homogeneous=1, max_depth=2))
    assert total == SortStats(partitions=3, radix_base_cases=9, skipped_homogeneous=1, max_depth=3)


def test_parallel_stats_include_bucket_tasks(make_dataset):
    keys = make_dataset("uniform", 300_000, seed=9)
    stats = SortStats()
    sort(keys, SortConfig(rmi_bucket_count=16, radix_base_case=1024, workers=4), stats=stats)
    assert verify_sorted(keys).ok
    # Every bucket goes to the pool, so deeper counters only arrive through merge.
    assert stats.partitions > 1
    assert stats.radix_base_cases > 0
    assert stats.max_depth >= 2


@pytest.mark.slow
@pytest.mark.skipif((os.cpu_count() or 1) < 8, reason="needs at least 8 hardware threads")
def test_eight_workers_are_three_times_faster(make_dataset):
    keys = make_dataset("uniform", 10_000_000, seed=1)

    def median_time(workers):
        times = []
        for _ in range(5):
            work = keys.copy()
            start = time.perf_counter()
            sort(work, SortConfig(workers=workers))
            times.append(time.perf_counter() - start)
        assert verify_sorted(work).ok
        return sorted(times)[2]

    assert median_time(1) >= 3 * median_time(8)


def test_sequential_sort_is_deterministic(make_dataset, small_config):
    keys = make_dataset("mixgauss", 50_000)
    first, second = keys.copy(), keys.copy()
    stats_a, stats_b = SortStats(), SortStats()
    sort(first, small_config, stats=stats_a)
    sort(second, small_config, stats=stats_b)
    assert stats_a == stats_b


@pytest.mark.slow
def test_duplicates_cost_at_most_three_times_uniform(make_dataset):
    uniform = make_dataset("uniform", 1_000_000, seed=1)
    rootdups = make_dataset("rootdups", 1_000_000)

    def median_time(keys):
        times = []
        for _ in range(5):
            work = keys.copy()
            start = time.perf_counter()
            sort(work)
            times.append(time.perf_counter() - start)
        return sorted(times)[2]

    assert median_time(rootdups) <= 3 * median_time(uniform)


# =====================
# Classic LearnedSort
# =====================

class _QuarterSteps:
    """Maps 10, 20, 30, 40 exactly onto 0, 0.25, 0.5, 0.75."""

    def predict_many(self, keys):
        return (keys.astype(np.float64) - 10) / 40


def test_model_counting_sort_with_perfect_predictions():
    segment = np.array([40, 10, 30, 20], dtype=np.uint64)
    counts = model_counting_sort(segment, _QuarterSteps())
    assert segment.tolist() == [10, 20, 30, 40]
    assert colliding_pairs(counts) == 0


def test_model_counting_sort_keeps_input_order_on_collisions():
    segment = np.array([7, 5, 6, 1_000_000], dtype=np.uint64)
    rmi = train_rmi(np.array([0, 1_000_000], dtype=np.uint64), 1)
    counts = model_counting_sort(segment, rmi)
    assert segment.tolist() == [7, 5, 6, 1_000_000]
    assert colliding_pairs(counts) == 3
    assert insertion_sort(segment) == 2
    assert segment.tolist() == [5, 6, 7, 1_000_000]


def test_monotone_model_leaves_only_collision_inversions(rng):
    segment = rng.integers(0, 1 << 50, size=1000, dtype=np.uint64)
    original = segment.copy()
    rmi = train_rmi(np.sort(segment[:200]), 16)
    counts = model_counting_sort(segment, rmi)
    assert multiset_fingerprint(segment) == multiset_fingerprint(original)
    slots = np.clip(np.floor(segment.size * rmi.predict_many(segment)), 0, segment.size - 1)
    assert np.all(np.diff(slots) >= 0)
    assert insertion_sort(segment) <= colliding_pairs(counts)
    assert np.array_equal(segment, np.sort(original))


def test_classic_sorted_input_is_unchanged():
    keys = np.arange(50_000, dtype=np.uint64)
    learned_sort_classic(keys, SortConfig(rmi_bucket_count=64))
    assert np.array_equal(keys, np.arange(50_000, dtype=np.uint64))


@pytest.mark.parametrize("name", DISTRIBUTIONS)
def test_classic_matches_reference(name, make_dataset):
    keys = make_dataset(name, 100_000, seed=3)
    expected = np.sort(keys)
    learned_sort_classic(keys, SortConfig(rmi_bucket_count=64))
    assert np.array_equal(keys, expected)


@pytest.mark.slow
@pytest.mark.parametrize("name", DISTRIBUTIONS)
def test_classic_matches_reference_at_one_million(name, make_dataset):
    keys = make_dataset(name, 1_000_000, seed=3)
    expected = np.sort(keys)
    learned_sort_classic(keys)
    assert np.array_equal(keys, expected)


@pytest.mark.parametrize("case", ["sorted", "reversed", "all_equal", "organ_pipe", "near_constant"])
def test_classic_adversarial_inputs(case, adversarial):
    keys = adversarial(20_000)[case]
    expected = np.sort(keys)
    learned_sort_classic(keys, SortConfig(rmi_bucket_count=64))
    assert np.array_equal(keys, expected)


def test_monotone_model_fixup_only_repairs_collisions(rng):
    keys = rng.choice(1 << 60, size=100_000, replace=False).astype(np.uint64)
    stats = ClassicSortStats()
    learned_sort_classic(keys, SortConfig(rmi_bucket_count=64), stats)
    assert verify_sorted(keys).ok
    assert stats.fixup_shifts <= stats.colliding_pairs


def test_unconstrained_model_is_repaired_by_fixup(make_dataset):
    keys = make_dataset("lognormal", 50_000, seed=4)
    expected = np.sort(keys)
    learned_sort_classic(keys, SortConfig(rmi_bucket_count=64, monotonic_rmi=False))
    assert np.array_equal(keys, expected)


def test_round_two_occupancy_near_n_over_b_squared(make_dataset):
    keys = make_dataset("uniform", 100_000, seed=6)
    stats = ClassicSortStats()
    learned_sort_classic(keys, SortConfig(rmi_bucket_count=32), stats)
    target = keys.size / 32**2
    assert 0.5 * target <= stats.mean_round_two_occupancy <= 1.5 * target
