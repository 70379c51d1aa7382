"""
CDF models used to partition keys.

- Rmi: two-layer recursive model index (linear root routing to B linear
  second-level models), with per-submodel output clamps that make the
  prediction globally nondecreasing.
- SplitterTree: sorted splitters in implicit heap layout for branchless
  k-way classification, with optional equality buckets for heavy splitters.
- PartitionModel: the tagged choice handed to the partitioning engine.
"""
import logging
from dataclasses import dataclass
from typing import List, Protocol, Tuple, Union

import numpy as np
import numpy.typing as npt

from app.services.exceptions import ModelTrainingError
from app.services.keys import Key, KeyArray

logger = logging.getLogger(__name__)

BucketArray = npt.NDArray[np.intp]


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def next_power_of_two(value: int) -> int:
    return 1 if value <= 1 else 1 << (int(value) - 1).bit_length()


def floor_power_of_two(value: int) -> int:
    return 1 if value <= 1 else 1 << (int(value).bit_length() - 1)


# =====================
# Linear models and the RMI
# =====================

@dataclass(frozen=True)
class LinearModel:
    """y = slope * t + intercept over the normalized key t in [0, 1]."""
    slope: float
    intercept: float

    def __call__(self, t):
        return self.slope * t + self.intercept


@dataclass(frozen=True, eq=False)
class Rmi:
    """
    Two-layer linear recursive model index.

    Keys are normalized to t = (x - key_min) / (key_max - key_min) on the
    integer bits, so large 64-bit keys keep their resolution. Submodel i
    answers within [clamp_lo[i], clamp_hi[i]]; keys outside the training
    range predict 0.0 or 1.0.
    """
    root: LinearModel
    slopes: npt.NDArray[np.float64]
    intercepts: npt.NDArray[np.float64]
    clamp_lo: npt.NDArray[np.float64]
    clamp_hi: npt.NDArray[np.float64]
    key_min: int
    key_max: int

    @property
    def model_count(self) -> int:
        return int(self.slopes.size)

    @property
    def submodels(self) -> List[LinearModel]:
        return [LinearModel(float(s), float(b)) for s, b in zip(self.slopes, self.intercepts)]

    def normalize(self, keys: KeyArray) -> npt.NDArray[np.float64]:
        keys = np.asarray(keys, dtype=np.uint64)
        span = self.key_max - self.key_min
        if span == 0:
            return np.zeros(keys.shape, dtype=np.float64)
        lo = np.uint64(self.key_min)
        clipped = np.clip(keys, lo, np.uint64(self.key_max))
        return (clipped - lo).astype(np.float64) / float(span)

    def route(self, t: npt.NDArray[np.float64]) -> BucketArray:
        """Index of the second-level model responsible for each normalized key."""
        scaled = self.root(t) * self.model_count
        return np.clip(scaled, 0, self.model_count - 1).astype(np.intp)

    def predict_many(self, keys: KeyArray) -> npt.NDArray[np.float64]:
        keys = np.asarray(keys, dtype=np.uint64)
        t = self.normalize(keys)
        idx = self.route(t)
        y = self.slopes[idx] * t + self.intercepts[idx]
        y = np.clip(y, self.clamp_lo[idx], self.clamp_hi[idx])
        np.clip(y, 0.0, 1.0, out=y)
        y[keys < np.uint64(self.key_min)] = 0.0
        y[keys > np.uint64(self.key_max)] = 1.0
        return y

    def predict(self, x: Key) -> float:
        return float(self.predict_many(np.array([x], dtype=np.uint64))[0])


def _least_squares(t: npt.NDArray[np.float64], y: npt.NDArray[np.float64]) -> Tuple[float, float]:
    mean_t = float(t.mean())
    mean_y = float(y.mean())
    dt = t - mean_t
    sxx = float(np.dot(dt, dt))
    if sxx <= 0.0:
        return 0.0, mean_y
    slope = float(np.dot(dt, y - mean_y)) / sxx
    return slope, mean_y - slope * mean_t


def _fit_submodels(
    idx: BucketArray,
    t: npt.NDArray[np.float64],
    y: npt.NDArray[np.float64],
    model_count: int,
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Per-submodel least squares, computed with grouped sums."""
    counts = np.bincount(idx, minlength=model_count).astype(np.float64)
    nonempty = counts > 0
    zeros = np.zeros(model_count, dtype=np.float64)
    mean_t = np.divide(np.bincount(idx, weights=t, minlength=model_count), counts, out=zeros.copy(), where=nonempty)
    mean_y = np.divide(np.bincount(idx, weights=y, minlength=model_count), counts, out=zeros.copy(), where=nonempty)
    dt = t - mean_t[idx]
    dy = y - mean_y[idx]
    sxx = np.bincount(idx, weights=dt * dt, minlength=model_count)
    sxy = np.bincount(idx, weights=dt * dy, minlength=model_count)
    slopes = np.divide(sxy, sxx, out=zeros.copy(), where=sxx > 0)
    intercepts = mean_y - slopes * mean_t

    if not nonempty.all():
        # Empty submodels answer a constant interpolated from their neighbours.
        positions = np.arange(model_count)
        fill = np.interp(positions, positions[nonempty], mean_y[nonempty])
        slopes[~nonempty] = 0.0
        intercepts[~nonempty] = fill[~nonempty]
    return slopes, intercepts


def train_rmi(sorted_sample: KeyArray, b_model: int, monotonic: bool = True) -> Rmi:
    """
    Fit a two-layer RMI on a sorted sample, mapping each key to rank/len.

    With monotonic=True (the default) the result goes through
    enforce_monotonic and predicts a globally nondecreasing CDF.
    """
    sample = np.ascontiguousarray(sorted_sample, dtype=np.uint64)
    if sample.size < 2:
        raise ModelTrainingError(f"RMI needs at least 2 sample keys, got {sample.size}")
    if b_model < 1:
        raise ModelTrainingError(f"RMI needs at least one second-level model, got {b_model}")

    ranks = np.arange(sample.size, dtype=np.float64) / sample.size
    skeleton = Rmi(
        root=LinearModel(0.0, 0.0),
        slopes=np.zeros(b_model),
        intercepts=np.zeros(b_model),
        clamp_lo=np.zeros(b_model),
        clamp_hi=np.ones(b_model),
        key_min=int(sample[0]),
        key_max=int(sample[-1]),
    )
    t = skeleton.normalize(sample)
    root_slope, root_intercept = _least_squares(t, ranks)
    root = LinearModel(root_slope, root_intercept)

    routed = Rmi(root, skeleton.slopes, skeleton.intercepts, skeleton.clamp_lo, skeleton.clamp_hi,
                 skeleton.key_min, skeleton.key_max)
    idx = routed.route(t)
    slopes, intercepts = _fit_submodels(idx, t, ranks, b_model)

    rmi = Rmi(root, slopes, intercepts, skeleton.clamp_lo, skeleton.clamp_hi, skeleton.key_min, skeleton.key_max)
    if monotonic:
        rmi = enforce_monotonic(rmi, sample)
    return rmi


def enforce_monotonic(rmi: Rmi, sorted_sample: KeyArray) -> Rmi:
    """
    Clamp slopes to >= 0 and derive per-submodel output bounds so that
    clamp_lo[0] <= clamp_hi[0] <= clamp_lo[1] <= ... holds.

    Observed submodel output ranges over the sample form the interleaved
    sequence lo0, hi0, lo1, hi1, ...; its running max (left to right) and
    running min (right to left) are both nondecreasing, and their mean is
    used as the bounds. An already monotone model keeps its predictions on
    the sample.
    """
    sample = np.ascontiguousarray(sorted_sample, dtype=np.uint64)
    model_count = rmi.model_count
    root = LinearModel(max(rmi.root.slope, 0.0), rmi.root.intercept)
    slopes = np.maximum(rmi.slopes, 0.0)
    intercepts = rmi.intercepts.copy()
    clamped = Rmi(root, slopes, intercepts, rmi.clamp_lo, rmi.clamp_hi, rmi.key_min, rmi.key_max)

    t = clamped.normalize(sample)
    idx = clamped.route(t)
    y = np.clip(slopes[idx] * t + intercepts[idx], rmi.clamp_lo[idx], rmi.clamp_hi[idx])

    # Sorted sample + monotone root => submodel groups are contiguous runs.
    positions = np.arange(model_count)
    starts = np.searchsorted(idx, positions, side="left")
    ends = np.searchsorted(idx, positions, side="right")
    nonempty = ends > starts
    if not nonempty.any():
        raise ModelTrainingError("sample routes to no submodel")
    group_starts = starts[nonempty]
    lows = np.minimum.reduceat(y, group_starts)
    highs = np.maximum.reduceat(y, group_starts)

    # Empty submodels get a zero-width range at the previous nonempty upper bound.
    lo_all = np.zeros(model_count, dtype=np.float64)
    hi_all = np.zeros(model_count, dtype=np.float64)
    lo_all[nonempty] = lows
    hi_all[nonempty] = highs
    last = np.maximum.accumulate(np.where(nonempty, positions, -1))
    fill = np.where(last < 0, lows[0], hi_all[np.maximum(last, 0)])
    lo_all[~nonempty] = fill[~nonempty]
    hi_all[~nonempty] = fill[~nonempty]
    interleaved = np.empty(2 * model_count, dtype=np.float64)
    interleaved[0::2] = np.clip(lo_all, 0.0, 1.0)
    interleaved[1::2] = np.clip(hi_all, 0.0, 1.0)
    rising = np.maximum.accumulate(interleaved)
    falling = np.minimum.accumulate(interleaved[::-1])[::-1]
    bounds = (rising + falling) / 2.0
    clamp_lo = bounds[0::2].copy()
    clamp_hi = bounds[1::2].copy()

    slopes[~nonempty] = 0.0
    intercepts[~nonempty] = (clamp_lo[~nonempty] + clamp_hi[~nonempty]) / 2.0
    return Rmi(root, slopes, intercepts, clamp_lo, clamp_hi, rmi.key_min, rmi.key_max)


def rmi_predict(rmi: Rmi, x: Key) -> float:
    """Predicted CDF of x, always within [0, 1]."""
    return rmi.predict(x)


class CdfModel(Protocol):
    """Anything that maps keys to predicted CDF values in [0, 1]."""

    def predict_many(self, keys: KeyArray) -> npt.NDArray[np.float64]:
        ...


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Exact CDF of a reference array: P(A <= x)."""
    sorted_keys: KeyArray

    def predict_many(self, keys: KeyArray) -> npt.NDArray[np.float64]:
        keys = np.asarray(keys, dtype=np.uint64)
        ranks = np.searchsorted(self.sorted_keys, keys, side="right")
        return ranks / max(1, self.sorted_keys.size)


# =====================
# Splitter tree
# =====================

@dataclass(frozen=True, eq=False)
class SplitterTree:
    """
    Branchless k-way classifier.

    tree[1:leaf_count] holds the (padded) splitters in implicit heap order;
    a key descends log2(leaf_count) levels choosing the right child when it
    is greater than the node. Leaf j satisfies splitter[j-1] < x <= splitter[j].
    In equality mode bucket 2j holds leaf j and bucket 2j+1 holds keys equal
    to splitter j when that splitter is heavy.
    """
    tree: KeyArray
    sorted_splitters: KeyArray
    leaf_count: int
    equality_mode: bool
    equality_map: npt.NDArray[np.bool_]
    distinct_count: int

    @property
    def splitters(self) -> KeyArray:
        return self.sorted_splitters[: self.distinct_count]

    @property
    def bucket_count(self) -> int:
        return 2 * self.leaf_count - 1 if self.equality_mode else self.leaf_count

    def leaves(self, keys: KeyArray) -> BucketArray:
        keys = np.asarray(keys, dtype=np.uint64)
        node = np.ones(keys.shape, dtype=np.intp)
        for _ in range(self.leaf_count.bit_length() - 1):
            node = 2 * node + (keys > self.tree[node])
        return node - self.leaf_count

    def classify_many(self, keys: KeyArray) -> BucketArray:
        keys = np.asarray(keys, dtype=np.uint64)
        leaf = self.leaves(keys)
        if not self.equality_mode:
            return leaf
        splitter_at = np.append(self.sorted_splitters, np.uint64(0))
        heavy_at = np.append(self.equality_map[: self.leaf_count - 1], False)
        equal = heavy_at[leaf] & (keys == splitter_at[leaf])
        return 2 * leaf + equal

    def classify(self, x: Key) -> int:
        return int(self.classify_many(np.array([x], dtype=np.uint64))[0])

    def is_equality_bucket(self, bucket: int) -> bool:
        if not self.equality_mode or bucket % 2 == 0:
            return False
        return bool(self.equality_map[bucket // 2])


def _heap_layout(sorted_splitters: KeyArray, leaf_count: int) -> KeyArray:
    tree = np.zeros(leaf_count, dtype=np.uint64)
    stack = [(1, 0, leaf_count - 1)]
    while stack:
        node, lo, hi = stack.pop()
        if lo >= hi:
            continue
        mid = (lo + hi) // 2
        tree[node] = sorted_splitters[mid]
        stack.append((2 * node, lo, mid))
        stack.append((2 * node + 1, mid + 1, hi))
    return tree


def build_splitter_tree(sorted_sample: KeyArray, bucket_count: int, equality_mode: bool = True) -> SplitterTree:
    """
    Pick bucket_count - 1 equally spaced order statistics of the sample as
    splitters, collapse duplicates, and flag splitters occupying more than
    1/bucket_count of the sample for equality buckets.
    """
    sample = np.ascontiguousarray(sorted_sample, dtype=np.uint64)
    if sample.size == 0:
        raise ModelTrainingError("cannot build a splitter tree from an empty sample")
    if bucket_count < 2 or not is_power_of_two(bucket_count):
        raise ValueError(f"bucket_count must be a power of two >= 2, got {bucket_count}")

    n = sample.size
    positions = np.maximum(np.arange(1, bucket_count) * n // bucket_count - 1, 0)
    distinct = np.unique(sample[positions])
    distinct_count = int(distinct.size)
    leaf_count = max(2, next_power_of_two(distinct_count + 1))

    padded = np.concatenate([distinct, np.repeat(distinct[-1], leaf_count - 1 - distinct_count)])
    equality_map = np.zeros(leaf_count, dtype=np.bool_)
    if equality_mode:
        frequency = np.searchsorted(sample, distinct, side="right") - np.searchsorted(sample, distinct, side="left")
        equality_map[:distinct_count] = frequency * bucket_count > n

    return SplitterTree(
        tree=_heap_layout(padded, leaf_count),
        sorted_splitters=padded,
        leaf_count=leaf_count,
        equality_mode=equality_mode,
        equality_map=equality_map,
        distinct_count=distinct_count,
    )


def duplicate_fraction(sorted_sample: KeyArray) -> float:
    """1 - distinct/len for a sorted sample; 0 for an empty one."""
    sample = np.asarray(sorted_sample)
    if sample.size == 0:
        return 0.0
    distinct = 1 + int(np.count_nonzero(sample[1:] != sample[:-1]))
    return 1.0 - distinct / sample.size


# =====================
# Partition models
# =====================

@dataclass(frozen=True, eq=False)
class LearnedPartition:
    """Buckets from the CDF: floor(bucket_count * F(x)), clamped."""
    rmi: Rmi
    bucket_count: int

    def __post_init__(self):
        if self.bucket_count < 2:
            raise ValueError(f"bucket_count must be >= 2, got {self.bucket_count}")

    def bucket_indices(self, keys: KeyArray) -> BucketArray:
        scaled = self.rmi.predict_many(keys) * self.bucket_count
        return np.minimum(scaled.astype(np.intp), self.bucket_count - 1)

    def bucket_index(self, x: Key) -> int:
        return int(self.bucket_indices(np.array([x], dtype=np.uint64))[0])

    def is_equality_bucket(self, bucket: int) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class TreePartition:
    """Buckets from splitter comparisons."""
    tree: SplitterTree

    @property
    def bucket_count(self) -> int:
        return self.tree.bucket_count

    def bucket_indices(self, keys: KeyArray) -> BucketArray:
        return self.tree.classify_many(keys)

    def bucket_index(self, x: Key) -> int:
        return self.tree.classify(x)

    def is_equality_bucket(self, bucket: int) -> bool:
        return self.tree.is_equality_bucket(bucket)


PartitionModel = Union[LearnedPartition, TreePartition]


def bucket_index(model: PartitionModel, x: Key) -> int:
    """Bucket of a single key, always within [0, model.bucket_count)."""
    return model.bucket_index(x)
