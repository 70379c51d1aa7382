"""
Learned-pivot analysis algorithms.

Quicksort with a learned pivot (largest key whose predicted CDF is at most
one half), Learned Quicksort that splits directly on F(x) <= 0.5, implicit
pivot extraction for samplesort, and the pivot-quality metric used to
compare learned and random pivots. These are reference algorithms for
experiments, not tuned sorters.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from app.models.schemas import PivotQualityReport
from app.services.cdf_models import CdfModel, Rmi, train_rmi
from app.services.exceptions import PivotCountError
from app.services.keys import Key, KeyArray, as_keys
from app.services.sorter import insertion_sort, radix_base_case_sort

logger = logging.getLogger(__name__)

BASE_CASE_SIZE = 16
MODEL_FANOUT = 16
MIN_SAMPLE = 100
MAX_SAMPLE = 10_000


@dataclass
class OperationCounter:
    """Element operations: model predictions, swaps and fallback comparisons."""
    predictions: int = 0
    swaps: int = 0
    comparisons: int = 0

    @property
    def total(self) -> int:
        return self.predictions + self.swaps + self.comparisons


def classic_sample_size(n: int) -> int:
    return min(n, min(max(MIN_SAMPLE, n // 100), MAX_SAMPLE))


def train_segment_model(segment: KeyArray, rng: np.random.Generator, fanout: int = MODEL_FANOUT) -> Rmi:
    """Train a small monotone RMI on a sample drawn without replacement."""
    n = segment.size
    size = classic_sample_size(n)
    sample = segment[rng.choice(n, size=size, replace=False)] if size < n else segment.copy()
    radix_base_case_sort(sample)
    return train_rmi(sample, min(fanout, max(1, size // 8)))


def _keys(a: npt.ArrayLike) -> KeyArray:
    if isinstance(a, np.ndarray) and a.dtype == np.uint64 and a.flags.c_contiguous:
        return a
    return as_keys(a)


# =====================
# Quicksort with a learned pivot
# =====================

def partition_learned_pivot(
    segment: KeyArray,
    rng: Optional[np.random.Generator] = None,
    counter: Optional[OperationCounter] = None,
    model: Optional[CdfModel] = None,
) -> int:
    """
    Lomuto partition around the largest key with F(x) <= 0.5.

    Args:
        segment: keys to partition in place, length >= 2
        rng: sampling generator for model training
        counter: optional operation counter
        model: CDF model to use instead of training one on the segment

    Returns:
        Final index q of the pivot: segment[:q] <= pivot < segment[q+1:]
    """
    n = segment.size
    if n < 2:
        raise ValueError(f"partition needs at least 2 keys, got {n}")
    if segment.min() == segment.max():
        return n // 2

    if model is None:
        model = train_segment_model(segment, rng or np.random.default_rng())
    predictions = model.predict_many(segment)
    if counter is not None:
        counter.predictions += n

    candidates = np.flatnonzero(predictions <= 0.5)
    if candidates.size:
        # argmax returns the first maximum, so ties go to the lowest index.
        chosen = int(candidates[np.argmax(segment[candidates])])
    else:
        chosen = n // 2
    values = segment.tolist()
    values[chosen], values[n - 1] = values[n - 1], values[chosen]
    pivot = values[n - 1]
    swaps = int(chosen != n - 1)
    i = 0
    for j in range(n - 1):
        if values[j] <= pivot:
            if i != j:
                values[i], values[j] = values[j], values[i]
                swaps += 1
            i += 1
    if i != n - 1:
        values[i], values[n - 1] = values[n - 1], values[i]
        swaps += 1
    segment[:] = np.array(values, dtype=np.uint64)
    if counter is not None:
        counter.swaps += swaps
    return i


def quicksort_learned_pivot(
    a: npt.ArrayLike,
    base_case_size: int = BASE_CASE_SIZE,
    seed: int = 0,
    counter: Optional[OperationCounter] = None,
) -> KeyArray:
    """Quicksort whose pivot is chosen by a CDF model trained per segment."""
    keys = _keys(a)
    rng = np.random.default_rng(seed)
    stack = [(0, keys.size)]
    while stack:
        lo, hi = stack.pop()
        segment = keys[lo:hi]
        if segment.size <= base_case_size:
            insertion_sort(segment)
            continue
        if segment.min() == segment.max():
            continue
        q = partition_learned_pivot(segment, rng, counter)
        stack.append((lo, lo + q))
        stack.append((lo + q + 1, hi))
    return keys


# =====================
# Learned Quicksort
# =====================

def _median_of_three(segment: KeyArray) -> Key:
    a, b, c = int(segment[0]), int(segment[segment.size // 2]), int(segment[-1])
    return sorted((a, b, c))[1]


def learned_partition(
    segment: KeyArray,
    rng: Optional[np.random.Generator] = None,
    counter: Optional[OperationCounter] = None,
    model: Optional[CdfModel] = None,
) -> int:
    """
    Two-way split by the predicate F(x) <= 0.5; returns the size of the left part.

    When the model puts every key on one side, this level splits on a
    median-of-three comparison pivot instead (x <= p, or x < p when p is the
    maximum). The segment must hold at least two distinct keys.
    """
    n = segment.size
    if model is None:
        model = train_segment_model(segment, rng or np.random.default_rng())
    left_mask = model.predict_many(segment) <= 0.5
    if counter is not None:
        counter.predictions += n
    left_count = int(np.count_nonzero(left_mask))

    if left_count == 0 or left_count == n:
        pivot = np.uint64(_median_of_three(segment))
        left_mask = segment <= pivot
        if left_mask.all():
            left_mask = segment < pivot
        left_count = int(np.count_nonzero(left_mask))
        if counter is not None:
            counter.comparisons += n
        logger.debug("degenerate learned split of %d keys, median-of-three fallback", n)

    # Exchange the misplaced keys pairwise, as a two-pointer scan from both ends would.
    misplaced_left = np.flatnonzero(~left_mask[:left_count])
    misplaced_right = left_count + np.flatnonzero(left_mask[left_count:])[::-1]
    segment[misplaced_left], segment[misplaced_right] = segment[misplaced_right], segment[misplaced_left]
    if counter is not None:
        counter.swaps += int(misplaced_left.size)
    return left_count


def learned_quicksort(
    a: npt.ArrayLike,
    base_case_size: int = BASE_CASE_SIZE,
    seed: int = 0,
    counter: Optional[OperationCounter] = None,
) -> KeyArray:
    """Quicksort that partitions on the model's prediction instead of a pivot key."""
    keys = _keys(a)
    rng = np.random.default_rng(seed)
    stack = [(0, keys.size)]
    while stack:
        lo, hi = stack.pop()
        segment = keys[lo:hi]
        if segment.size <= base_case_size:
            insertion_sort(segment)
            continue
        if segment.min() == segment.max():
            continue
        split = learned_partition(segment, rng, counter)
        stack.append((lo, lo + split))
        stack.append((lo + split, hi))
    return keys


# =====================
# Pivots and pivot quality
# =====================

def learned_pivots_for_samplesort(a: npt.ArrayLike, model: CdfModel, b: int) -> KeyArray:
    """
    Implicit pivots: the largest key of every CDF cell floor(F(x) * b).
    Cells that no key hits are dropped, as is the last cell; the result is
    strictly increasing with at most b - 1 pivots.
    """
    keys = np.asarray(a, dtype=np.uint64)
    if keys.size == 0 or b < 2:
        return np.empty(0, dtype=np.uint64)
    cells = np.minimum((model.predict_many(keys) * b).astype(np.intp), b - 1)
    hit = np.bincount(cells, minlength=b) > 0
    largest = np.zeros(b, dtype=np.uint64)
    np.maximum.at(largest, cells, keys)
    return np.unique(largest[: b - 1][hit[: b - 1]])


def random_pivots(a: npt.ArrayLike, b: int, rng: np.random.Generator) -> KeyArray:
    """
    b - 1 pivots as equally spaced order statistics of a random sample,
    oversampled by max(1, floor(0.2 * log2 n)).
    """
    keys = np.asarray(a, dtype=np.uint64)
    n = keys.size
    oversampling = max(1, int(0.2 * math.log2(max(n, 2))))
    size = min(n, oversampling * b - 1)
    sample = np.sort(keys[rng.choice(n, size=size, replace=False)])
    positions = np.minimum(np.arange(1, b) * size // b, size - 1)
    return sample[positions]


def eta(a_sorted: npt.ArrayLike, pivot: Key) -> float:
    """max(P(A <= pivot), 1 - P(A <= pivot)) - 1/2."""
    keys = np.asarray(a_sorted, dtype=np.uint64)
    if keys.size == 0:
        raise ValueError("eta needs a nonempty array")
    p = int(np.searchsorted(keys, np.uint64(pivot), side="right")) / keys.size
    return max(p, 1.0 - p) - 0.5


def pivot_quality(a_sorted: npt.ArrayLike, pivots: npt.ArrayLike, b: int, method: str = "learned") -> PivotQualityReport:
    """
    Sum over pivots of |P(A <= p_i) - (i + 1) / b|, computed with exact
    integer ranks. Single-pivot reports also carry eta.
    """
    keys = np.asarray(a_sorted, dtype=np.uint64)
    pivots = np.asarray(pivots, dtype=np.uint64)
    if pivots.size + 1 != b:
        raise PivotCountError(f"pivot quality for b={b} needs {b - 1} pivots, got {pivots.size}")
    n = keys.size
    if n == 0:
        raise ValueError("pivot quality needs a nonempty array")
    ranks = np.searchsorted(keys, pivots, side="right").astype(np.int64)
    ideal = np.arange(1, b, dtype=np.int64) * n
    distance = float(np.abs(ranks * b - ideal).sum()) / (n * b)
    return PivotQualityReport(
        method=method,
        pivot_count=int(pivots.size),
        distance=distance,
        eta=eta(keys, int(pivots[0])) if b == 2 else None,
    )
