"""
Sorting drivers built on the block partitioning engine.

sort() is the hybrid learned samplesort: each segment is partitioned by a
learned RMI partition when the input is large and mostly distinct, and by a
splitter tree otherwise; small buckets go to an MSD radix base case.
learned_sort_classic() is the two-round LearnedSort with model counting
sort and an insertion-sort fixup.
"""
import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from multiprocessing import shared_memory
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt

from app.models.schemas import SortConfig
from app.services.cdf_models import (
    LearnedPartition,
    PartitionModel,
    Rmi,
    TreePartition,
    build_splitter_tree,
    duplicate_fraction,
    floor_power_of_two,
    train_rmi,
)
from app.services.keys import KeyArray, as_keys
from app.services.partition import BucketBoundary, partition

logger = logging.getLogger(__name__)

MIN_KEYS_PER_SUBMODEL = 8
RADIX_BITS = 8
RADIX = 1 << RADIX_BITS

ModelBuilder = Callable[[KeyArray, SortConfig, np.random.Generator], PartitionModel]


class SortCheck(NamedTuple):
    ok: bool
    index: int


# =====================
# Base cases
# =====================

def insertion_sort(segment: KeyArray) -> int:
    """Sort a segment in place; returns the number of element shifts."""
    values = segment.tolist()
    shifts = 0
    for i in range(1, len(values)):
        x = values[i]
        j = i - 1
        while j >= 0 and values[j] > x:
            values[j + 1] = values[j]
            j -= 1
        shifts += i - 1 - j
        values[j + 1] = x
    if shifts:
        segment[:] = np.array(values, dtype=np.uint64)
    return shifts


def radix_base_case_sort(segment: KeyArray, insertion_base_case: int = 16) -> None:
    """
    MSD byte radix sort in place. Each pass starts at the highest byte in
    which the segment's min and max differ, so shared prefixes cost nothing;
    ranges at or below insertion_base_case finish with insertion sort.
    """
    stack = [(0, segment.size)]
    while stack:
        lo, hi = stack.pop()
        part = segment[lo:hi]
        if part.size <= insertion_base_case:
            insertion_sort(part)
            continue
        low_key = int(part.min())
        high_key = int(part.max())
        if low_key == high_key:
            continue
        shift = ((low_key ^ high_key).bit_length() - 1) // RADIX_BITS * RADIX_BITS
        digits = ((part >> np.uint64(shift)) & np.uint64(RADIX - 1)).astype(np.intp)
        part[:] = part[np.argsort(digits, kind="stable")]
        counts = np.bincount(digits, minlength=RADIX)
        ends = np.cumsum(counts)
        for digit in np.flatnonzero(counts > 1):
            stack.append((lo + int(ends[digit] - counts[digit]), lo + int(ends[digit])))


def heapsort_fallback(segment: KeyArray) -> None:
    """Comparison heapsort, used once recursion passes the depth cap."""
    heap = segment.tolist()
    heapq.heapify(heap)
    segment[:] = np.array([heapq.heappop(heap) for _ in range(len(heap))], dtype=np.uint64)


def reference_sort(keys: KeyArray) -> None:
    """Reference comparison sort (numpy's unstable introsort) in place."""
    keys.sort(kind="quicksort")


# =====================
# Verification
# =====================

def verify_sorted(keys: npt.ArrayLike) -> SortCheck:
    """(True, -1) when nondecreasing, else (False, first index i with a[i-1] > a[i])."""
    arr = np.asarray(keys)
    if arr.size < 2:
        return SortCheck(True, -1)
    bad = np.flatnonzero(arr[1:] < arr[:-1])
    if bad.size:
        return SortCheck(False, int(bad[0]) + 1)
    return SortCheck(True, -1)


def _mix64(keys: KeyArray) -> KeyArray:
    z = keys + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def multiset_fingerprint(keys: npt.ArrayLike) -> Tuple[int, int, int]:
    """Order-independent (count, sum, xor) of mixed keys."""
    arr = np.ascontiguousarray(keys, dtype=np.uint64)
    mixed = _mix64(arr)
    return (
        int(arr.size),
        int(np.sum(mixed, dtype=np.uint64)),
        int(np.bitwise_xor.reduce(mixed)) if mixed.size else 0,
    )


# =====================
# Model selection
# =====================

def _sorted_sample(segment: KeyArray, size: int, rng: np.random.Generator) -> KeyArray:
    sample = segment[rng.integers(0, segment.size, size=size)]
    sample.sort(kind="quicksort")
    return sample


def submodel_count(cfg: SortConfig, sample_size: int) -> int:
    return min(cfg.rmi_model_count, max(1, sample_size // MIN_KEYS_PER_SUBMODEL))


def build_partition_model(segment: KeyArray, cfg: SortConfig, rng: np.random.Generator) -> PartitionModel:
    """
    Choose the partition model of one step: a learned partition when the
    segment holds at least min_rmi_input keys and the first sample is mostly
    distinct, a splitter tree otherwise.
    """
    n = segment.size
    first = _sorted_sample(segment, cfg.first_sample_size(n), rng)
    dups = duplicate_fraction(first)
    if n >= cfg.min_rmi_input and dups <= cfg.max_duplicate_fraction:
        sample = _sorted_sample(segment, cfg.rmi_sample_size(n), rng)
        # The partition order must follow the prediction order, so this path always trains monotone.
        rmi = train_rmi(sample, submodel_count(cfg, sample.size), monotonic=True)
        return LearnedPartition(rmi, cfg.rmi_bucket_count)
    bucket_count = min(cfg.tree_bucket_count, max(2, floor_power_of_two(first.size)))
    logger.debug("splitter tree for %d keys (duplicate fraction %.3f)", n, dups)
    return TreePartition(build_splitter_tree(first, bucket_count, cfg.equality_buckets))


# =====================
# Hybrid sorter
# =====================

@dataclass
class _Task:
    lo: int
    hi: int
    depth: int
    forwarded: Optional[Tuple[Rmi, float, float]] = None


@dataclass
class SortStats:
    """Counters collected by one sort() call."""
    partitions: int = 0
    learned_partitions: int = 0
    tree_partitions: int = 0
    radix_base_cases: int = 0
    counting_base_cases: int = 0
    heapsort_fallbacks: int = 0
    skipped_homogeneous: int = 0
    max_depth: int = 0

    def merge(self, other: "SortStats") -> None:
        """Fold the counters of a bucket task sorted elsewhere into these."""
        for counter in fields(self):
            mine, theirs = getattr(self, counter.name), getattr(other, counter.name)
            setattr(self, counter.name, max(mine, theirs) if counter.name == "max_depth" else mine + theirs)


class _HybridSorter:
    def __init__(self, keys: KeyArray, cfg: SortConfig, model_builder: Optional[ModelBuilder], stats: SortStats):
        self.keys = keys
        self.cfg = cfg
        self.model_builder = model_builder or build_partition_model
        self.stats = stats
        n = keys.size
        self.depth_limit = math.ceil(math.log2(n) / math.log2(cfg.tree_bucket_count)) + 4

    def partition_step(self, task: _Task, workers: int) -> List[_Task]:
        segment = self.keys[task.lo : task.hi]
        rng = np.random.default_rng([self.cfg.seed, task.lo, task.depth])
        model = self.model_builder(segment, self.cfg, rng)
        boundaries = partition(segment, model, self.cfg.block_size, workers)
        self.stats.partitions += 1
        if isinstance(model, LearnedPartition):
            self.stats.learned_partitions += 1
        else:
            self.stats.tree_partitions += 1
        return [t for t in (self._child(task, model, b) for b in boundaries) if t is not None]

    def _child(self, parent: _Task, model: PartitionModel, boundary: BucketBoundary) -> Optional[_Task]:
        if boundary.size < 2:
            return None
        if boundary.homogeneous:
            self.stats.skipped_homogeneous += 1
            return None
        forwarded = None
        if isinstance(model, LearnedPartition):
            width = 1.0 / model.bucket_count
            forwarded = (model.rmi, boundary.bucket * width, (boundary.bucket + 1) * width)
        return _Task(parent.lo + boundary.begin, parent.lo + boundary.end, parent.depth + 1, forwarded)

    def base_case(self, task: _Task) -> bool:
        """Finish a task directly when it is small or too deep; returns True if handled."""
        cfg = self.cfg
        segment = self.keys[task.lo : task.hi]
        if segment.size <= cfg.insertion_base_case:
            insertion_sort(segment)
            return True
        if segment.size <= cfg.radix_base_case:
            if cfg.forward_rmi and task.forwarded is not None:
                rmi, cdf_lo, cdf_hi = task.forwarded
                model_counting_sort(segment, rmi, cdf_lo, cdf_hi)
                insertion_sort(segment)
                self.stats.counting_base_cases += 1
            else:
                radix_base_case_sort(segment, cfg.insertion_base_case)
                self.stats.radix_base_cases += 1
            return True
        if task.depth >= self.depth_limit:
            logger.warning("depth cap %d reached on %d keys, using heapsort", self.depth_limit, segment.size)
            heapsort_fallback(segment)
            self.stats.heapsort_fallbacks += 1
            return True
        return False

    def run(self, task: _Task) -> None:
        stack = [task]
        while stack:
            current = stack.pop()
            self.stats.max_depth = max(self.stats.max_depth, current.depth)
            if self.base_case(current):
                continue
            stack.extend(reversed(self.partition_step(current, workers=1)))

    def run_parallel(self, task: _Task, workers: int) -> None:
        """
        Partition the top level with all workers, then sort buckets as
        independent tasks. Buckets of at least 2 * radix_base_case keys go to
        a process pool working on a shared-memory copy of the keys; smaller
        ones are sorted inline. Each task returns its own SortStats, merged
        here once it completes.
        """
        if self.base_case(task):
            return
        children = self.partition_step(task, workers=workers)
        inline_limit = 2 * self.cfg.radix_base_case
        large = [child for child in children if child.hi - child.lo >= inline_limit]
        for child in children:
            if child.hi - child.lo < inline_limit:
                self.run(child)
        if not large:
            return
        block = shared_memory.SharedMemory(create=True, size=self.keys.nbytes)
        try:
            self._sort_in_processes(block, large, workers)
        finally:
            block.close()
            block.unlink()

    def _sort_in_processes(self, block: shared_memory.SharedMemory, tasks: List[_Task], workers: int) -> None:
        shared = np.ndarray(self.keys.shape, dtype=np.uint64, buffer=block.buf)
        shared[:] = self.keys
        logger.debug("sorting %d buckets on %d processes", len(tasks), workers)
        with ProcessPoolExecutor(
            max_workers=min(workers, len(tasks)),
            initializer=_attach_shared_keys,
            initargs=(block.name, self.keys.size),
        ) as pool:
            futures = [pool.submit(_sort_shared_bucket, task, self.cfg, self.model_builder) for task in tasks]
            for future in futures:
                self.stats.merge(future.result())
        for task in tasks:
            self.keys[task.lo : task.hi] = shared[task.lo : task.hi]
        del shared


# Per-process view of the keys being sorted by run_parallel.
_shared_block: Optional[shared_memory.SharedMemory] = None
_shared_keys: Optional[KeyArray] = None


def _attach_shared_keys(name: str, size: int) -> None:
    global _shared_block, _shared_keys
    _shared_block = shared_memory.SharedMemory(name=name)
    _shared_keys = np.ndarray((size,), dtype=np.uint64, buffer=_shared_block.buf)


def _sort_shared_bucket(task: _Task, cfg: SortConfig, model_builder: ModelBuilder) -> SortStats:
    stats = SortStats()
    _HybridSorter(_shared_keys, cfg, model_builder, stats).run(task)
    return stats


def sort(
    a: npt.ArrayLike,
    cfg: Optional[SortConfig] = None,
    model_builder: Optional[ModelBuilder] = None,
    stats: Optional[SortStats] = None,
) -> KeyArray:
    """
    Sort keys with the hybrid learned samplesort.

    A contiguous uint64 array is sorted in place and returned; any other
    input (floats, Python ints) is converted with as_keys and the sorted
    key array is returned.

    Args:
        a: keys to sort
        cfg: sorting configuration (defaults to SortConfig())
        model_builder: replaces build_partition_model, for tests and experiments
        stats: optional counters filled during the sort

    Returns:
        The sorted key array
    """
    cfg = cfg or SortConfig()
    keys = a if isinstance(a, np.ndarray) and a.dtype == np.uint64 and a.flags.c_contiguous else as_keys(a)
    if keys.size < 2:
        return keys
    sorter = _HybridSorter(keys, cfg, model_builder, stats or SortStats())
    root = _Task(0, keys.size, 0)
    if cfg.workers > 1:
        sorter.run_parallel(root, cfg.workers)
    else:
        sorter.run(root)
    return keys


# =====================
# Classic LearnedSort
# =====================

def _counting_slots(predictions: npt.NDArray[np.float64], cdf_lo: float, cdf_hi: float, size) -> npt.NDArray[np.int64]:
    width = cdf_hi - cdf_lo
    if width <= 0:
        return np.zeros(predictions.shape, dtype=np.int64)
    slots = np.floor(size * (predictions - cdf_lo) / width).astype(np.int64)
    return np.clip(slots, 0, np.maximum(np.asarray(size) - 1, 0))


def _place_by_slot(segment: KeyArray, slots: npt.NDArray[np.int64]) -> npt.NDArray[np.int64]:
    """Stable counting placement of segment by slot; returns the per-slot counts."""
    counts = np.bincount(slots, minlength=segment.size)
    segment[:] = segment[np.argsort(slots, kind="stable")]
    return counts


def colliding_pairs(counts: npt.NDArray[np.int64]) -> int:
    """Key pairs that share a slot; bounds the inversions a monotone model leaves."""
    counts = np.asarray(counts, dtype=np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def model_counting_sort(segment: KeyArray, model: Rmi, cdf_lo: float = 0.0, cdf_hi: float = 1.0) -> npt.NDArray[np.int64]:
    """
    Counting sort on predicted positions floor(m * (F(x) - lo) / (hi - lo))
    within the segment. Keys sharing a slot keep their input order, so the
    result is sorted only when the model is monotone and collision-free;
    otherwise insertion_sort finishes it. Returns the per-slot counts.
    """
    if segment.size < 2:
        return np.ones(segment.size, dtype=np.int64)
    slots = _counting_slots(model.predict_many(segment), cdf_lo, cdf_hi, segment.size)
    return _place_by_slot(segment, slots)


@dataclass
class ClassicSortStats:
    """Bucket occupancy and fixup cost of one learned_sort_classic call."""
    bucket_count: int = 0
    fixup_shifts: int = 0
    first_violation: int = -1
    # With a monotone model every fixup shift undoes a collision, so fixup_shifts <= colliding_pairs.
    colliding_pairs: int = 0
    round_one_sizes: List[int] = field(default_factory=list)
    round_two_sizes: List[int] = field(default_factory=list)

    @property
    def mean_round_two_occupancy(self) -> float:
        occupied = [size for size in self.round_two_sizes if size]
        return sum(occupied) / len(occupied) if occupied else 0.0


def _second_round(segment: KeyArray, rmi: Rmi, bucket: int, bucket_count: int) -> Tuple[npt.NDArray[np.int64], int]:
    """
    Split one first-round bucket into bucket_count sub-buckets and
    counting-sort each. Returns the sub-bucket sizes and the colliding pairs.
    """
    predictions = rmi.predict_many(segment)
    fine = np.floor(predictions * bucket_count * bucket_count).astype(np.int64) - bucket * bucket_count
    np.clip(fine, 0, bucket_count - 1, out=fine)
    counts = np.bincount(fine, minlength=bucket_count)
    starts = np.cumsum(counts) - counts
    sub_width = 1.0 / (bucket_count * bucket_count)
    sub_lo = (bucket * bucket_count + fine) * sub_width
    slots = _counting_slots(predictions - sub_lo, 0.0, sub_width, counts[fine])
    slot_counts = _place_by_slot(segment, starts[fine] + slots)
    return counts, colliding_pairs(slot_counts)


def learned_sort_classic(
    a: npt.ArrayLike,
    cfg: Optional[SortConfig] = None,
    stats: Optional[ClassicSortStats] = None,
) -> KeyArray:
    """
    Two-round LearnedSort: one RMI trained on a 1% sample drives a B-way
    partition, a B-way split of every bucket by the same RMI, a model
    counting sort inside each sub-bucket, and a final insertion sort that
    repairs whatever the model got wrong.
    """
    cfg = cfg or SortConfig()
    stats = stats if stats is not None else ClassicSortStats()
    keys = a if isinstance(a, np.ndarray) and a.dtype == np.uint64 and a.flags.c_contiguous else as_keys(a)
    n = keys.size
    if n <= cfg.insertion_base_case:
        stats.colliding_pairs = n * (n - 1) // 2
        stats.fixup_shifts = insertion_sort(keys)
        return keys

    rng = np.random.default_rng([cfg.seed, n])
    sample = _sorted_sample(keys, min(n, cfg.rmi_sample_size(n)), rng)
    rmi = train_rmi(sample, submodel_count(cfg, sample.size), monotonic=cfg.monotonic_rmi)
    bucket_count = cfg.rmi_bucket_count
    stats.bucket_count = bucket_count

    boundaries = partition(keys, LearnedPartition(rmi, bucket_count), cfg.block_size, 1)
    for boundary in boundaries:
        stats.round_one_sizes.append(boundary.size)
        if boundary.size < 2 or boundary.homogeneous:
            stats.round_two_sizes.append(boundary.size)
            continue
        counts, collisions = _second_round(keys[boundary.begin : boundary.end], rmi, boundary.bucket, bucket_count)
        stats.colliding_pairs += collisions
        stats.round_two_sizes.extend(int(c) for c in counts)

    check = verify_sorted(keys)
    stats.first_violation = check.index
    if not check.ok:
        stats.fixup_shifts = insertion_sort(keys[check.index - 1 :])
        logger.debug("classic fixup from index %d: %d shifts", check.index, stats.fixup_shifts)
    return keys
