"""
Tests for the block partitioning engine.
"""
import tracemalloc

import numpy as np
import pytest

from app.services.cdf_models import LearnedPartition, TreePartition, build_splitter_tree, train_rmi
from app.services.partition import (
    BlockPartitionState,
    BucketBoundary,
    BucketBuffers,
    ClaimCounter,
    classify_and_flush,
    effective_block_size,
    mark_homogeneous,
    partition,
    permute_blocks,
)
from app.services.sorter import multiset_fingerprint


def _assert_partitioned(segment, boundaries, model, original):
    assert boundaries[0].begin == 0 and boundaries[-1].end == segment.size
    for left, right in zip(boundaries, boundaries[1:]):
        assert left.end == right.begin
    for boundary in boundaries:
        ids = model.bucket_indices(segment[boundary.begin : boundary.end])
        assert np.all(ids == boundary.bucket)
    assert multiset_fingerprint(segment) == multiset_fingerprint(original)


def _tree_model(keys, bucket_count, rng, equality_mode=True):
    sample = np.sort(keys[rng.integers(0, keys.size, size=min(keys.size, 4096))])
    return TreePartition(build_splitter_tree(sample, bucket_count, equality_mode))


def test_claim_counter_hands_out_each_value_once():
    counter = ClaimCounter()
    assert [counter.fetch_add() for _ in range(3)] == [0, 1, 2]
    assert counter.fetch_add(5) == 3
    assert counter.value == 8
    counter.reset()
    assert counter.value == 0


def test_effective_block_size_bounds():
    assert effective_block_size(10**7, 256) == 2048
    assert effective_block_size(100_000, 256) == 64
    assert effective_block_size(1000, 256) == 16


def test_buffers_flush_full_blocks():
    buffers = BucketBuffers(bucket_count=2, block_size=4)
    keys = np.arange(10, dtype=np.uint64)
    ids = np.array([0, 1, 0, 0, 1, 0, 0, 0, 1, 1], dtype=np.intp)
    blocks, labels = buffers.push(keys, ids)
    assert labels.tolist() == [0, 1]
    assert blocks[0].tolist() == [0, 2, 3, 5]
    assert blocks[1].tolist() == [1, 4, 8, 9]
    assert buffers.fill.tolist() == [2, 0]
    assert buffers.tail(0).tolist() == [6, 7]
    assert buffers.buffer(0).keys.tolist() == [6, 7]


def test_counts_with_unit_blocks(perfect_buckets):
    segment = np.array([3, 1, 2, 3, 0, 3, 1, 0], dtype=np.uint64)
    model = perfect_buckets([0, 1, 2])
    state = BlockPartitionState.create(segment.size, model.bucket_count, block_size=1)
    classify_and_flush(segment, model, state)
    assert state.bucket_sizes.tolist() == [2, 2, 1, 3]
    assert state.bucket_sizes.sum() == segment.size


def test_uniform_counts_stay_within_binomial_bound(rng):
    keys = rng.integers(0, 1 << 40, size=1_000_000, dtype=np.uint64)
    # Evenly spaced quantiles make the trained model the exact CDF.
    rmi = train_rmi(np.arange(0, 1 << 40, 1 << 26, dtype=np.uint64), 1000)
    model = LearnedPartition(rmi, 1024)
    state = BlockPartitionState.create(keys.size, 1024, effective_block_size(keys.size, 1024))
    classify_and_flush(keys.copy(), model, state)
    expected = keys.size / 1024
    sigma = np.sqrt(keys.size * (1 / 1024) * (1 - 1 / 1024))
    assert np.all(np.abs(state.bucket_sizes - expected) <= 5 * sigma)


def test_flushed_blocks_and_tails_hold_every_key(rng):
    keys = rng.integers(0, 1 << 40, size=50_000, dtype=np.uint64)
    model = _tree_model(keys, 32, rng, equality_mode=False)
    segment = keys.copy()
    state = BlockPartitionState.create(segment.size, model.bucket_count, 64)
    classify_and_flush(segment, model, state)
    flushed = [segment[s * 64 : s * 64 + 64] for s in np.flatnonzero(state.block_buckets >= 0)]
    tails = [state.buffers[0].tail(bucket) for bucket in range(model.bucket_count)]
    everything = np.concatenate(flushed + tails)
    assert multiset_fingerprint(everything) == multiset_fingerprint(keys)
    for bucket, slots in enumerate(state.block_lists()):
        for slot in slots:
            assert np.all(model.bucket_indices(segment[slot * 64 : slot * 64 + 64]) == bucket)


def test_single_bucket_leaves_segment_unchanged(perfect_buckets, rng):
    keys = rng.integers(0, 1000, size=5000, dtype=np.uint64)
    segment = keys.copy()
    boundaries = partition(segment, perfect_buckets([]), block_size=16)
    assert len(boundaries) == 1
    assert (boundaries[0].begin, boundaries[0].end) == (0, keys.size)
    assert np.array_equal(segment, keys)


def test_two_buckets_split_on_predicate(perfect_buckets, rng):
    keys = rng.integers(0, 200, size=20_000, dtype=np.uint64)
    segment = keys.copy()
    model = perfect_buckets([99])
    boundaries = partition(segment, model, block_size=32)
    split = boundaries[0].end
    assert split == np.count_nonzero(keys < 100)
    assert np.all(segment[:split] < 100) and np.all(segment[split:] >= 100)


@pytest.mark.parametrize("size", [17, 1000, 4097, 65_536, 100_003])
@pytest.mark.parametrize("bucket_count", [2, 16, 256])
def test_tree_partition_is_exact(size, bucket_count, rng):
    keys = rng.integers(0, 1 << 63, size=size, dtype=np.uint64)
    model = _tree_model(keys, bucket_count, rng, equality_mode=False)
    segment = keys.copy()
    boundaries = partition(segment, model, block_size=2048)
    _assert_partitioned(segment, boundaries, model, keys)


@pytest.mark.parametrize("name", ["uniform", "normal", "zipf", "twodups"])
def test_learned_partition_is_exact(name, make_dataset):
    keys = make_dataset(name, 200_000, seed=7)
    rmi = train_rmi(np.sort(keys[::50]), 400)
    model = LearnedPartition(rmi, 1024)
    segment = keys.copy()
    boundaries = partition(segment, model)
    _assert_partitioned(segment, boundaries, model, keys)


def test_skewed_buckets_with_small_blocks(rng):
    heavy = np.full(30_000, 5, dtype=np.uint64)
    light = rng.integers(0, 1 << 20, size=3_001, dtype=np.uint64)
    keys = np.concatenate([heavy, light])
    rng.shuffle(keys)
    model = _tree_model(keys, 16, rng)
    segment = keys.copy()
    boundaries = partition(segment, model, block_size=16)
    _assert_partitioned(segment, boundaries, model, keys)
    assert any(b.homogeneous and b.size >= 30_000 for b in boundaries)


@pytest.mark.parametrize("workers", [2, 4])
def test_parallel_partition_matches_contract(workers, rng):
    keys = rng.integers(0, 1 << 63, size=300_001, dtype=np.uint64)
    model = _tree_model(keys, 64, rng, equality_mode=False)
    segment = keys.copy()
    boundaries = partition(segment, model, block_size=256, workers=workers)
    _assert_partitioned(segment, boundaries, model, keys)


def test_sequential_partition_is_deterministic(rng):
    keys = rng.integers(0, 1 << 63, size=80_000, dtype=np.uint64)
    model = _tree_model(keys, 64, rng)
    first, second = keys.copy(), keys.copy()
    partition(first, model, block_size=128)
    partition(second, model, block_size=128)
    assert np.array_equal(first, second)


def test_permute_returns_segment_local_boundaries(rng):
    keys = rng.integers(0, 1 << 30, size=10_000, dtype=np.uint64)
    model = _tree_model(keys, 8, rng, equality_mode=False)
    segment = keys.copy()
    state = BlockPartitionState.create(segment.size, model.bucket_count, 32)
    classify_and_flush(segment, model, state)
    boundaries = permute_blocks(segment, state)
    assert [b.size for b in boundaries] == state.bucket_sizes.tolist()


def test_mark_homogeneous():
    segment = np.array([7, 7, 7, 7, 7, 8, 7, 3], dtype=np.uint64)
    boundaries = [BucketBoundary(0, 0, 3), BucketBoundary(1, 3, 6), BucketBoundary(2, 6, 6), BucketBoundary(3, 6, 8)]
    mark_homogeneous(segment, boundaries)
    assert boundaries[0].homogeneous and boundaries[0].already_sorted
    assert not boundaries[1].homogeneous
    assert not boundaries[2].homogeneous
    assert not boundaries[3].homogeneous


def test_first_equals_last_alone_is_not_enough():
    segment = np.array([7, 9, 7], dtype=np.uint64)
    boundaries = mark_homogeneous(segment, [BucketBoundary(0, 0, 3)])
    assert not boundaries[0].homogeneous


def test_rootdups_partition_finds_homogeneous_buckets(make_dataset, rng):
    keys = make_dataset("rootdups", 10_000)
    model = _tree_model(keys, 256, rng)
    segment = keys.copy()
    boundaries = partition(segment, model)
    assert sum(b.homogeneous for b in boundaries) >= 1


def test_auxiliary_memory_stays_below_input_size(rng):
    keys = rng.integers(0, 1 << 63, size=1 << 20, dtype=np.uint64)
    model = _tree_model(keys, 256, rng, equality_mode=False)
    block = effective_block_size(keys.size, model.bucket_count)
    buffer_bytes = model.bucket_count * block * keys.itemsize

    tracemalloc.start()
    tracemalloc.reset_peak()
    partition(keys, model)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    assert peak <= 3 * buffer_bytes + (1 << 20)
    assert peak < keys.nbytes
