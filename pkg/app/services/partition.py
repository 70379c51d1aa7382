"""
In-place B-way block partitioning.

Three phases, shared by every driver:

1. classify_and_flush: each stripe of the segment is read in batches; keys
   go to per-bucket buffers of block_size keys, and full buffers are flushed
   as blocks into the already-read part of the same stripe.
2. permute_blocks: flushed blocks are moved to their bucket's block-aligned
   slot range by swap chains, then the unaligned head/tail gaps of each
   bucket are filled from the buffer tails and from blocks that overhang
   the bucket end.
3. mark_homogeneous: buckets holding a single distinct key are flagged so
   recursion skips them.

Auxiliary memory is the per-stripe buffers (k * b keys each), one batch of
classified keys, one carried block per worker and O(n / b) slot labels.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from app.services.cdf_models import PartitionModel, floor_power_of_two
from app.services.keys import KeyArray

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 2048
MIN_BLOCK_SIZE = 16
CLASSIFY_BATCH = 4096


def effective_block_size(length: int, bucket_count: int, block_size: int = DEFAULT_BLOCK_SIZE) -> int:
    """Shrink the block so that k buffers stay well below the segment length."""
    target = floor_power_of_two(max(1, length // (4 * bucket_count)))
    return max(MIN_BLOCK_SIZE, min(block_size, target))


class ClaimCounter:
    """Linearizable fetch-and-add counter shared by workers."""

    def __init__(self, start: int = 0):
        self._value = start
        self._lock = threading.Lock()

    def fetch_add(self, amount: int = 1) -> int:
        with self._lock:
            value = self._value
            self._value += amount
            return value

    def reset(self, value: int = 0) -> None:
        with self._lock:
            self._value = value

    @property
    def value(self) -> int:
        return self._value


@dataclass
class BucketBuffer:
    """View of one bucket's buffer: storage[:fill] are pending keys."""
    bucket: int
    storage: KeyArray
    fill: int

    @property
    def keys(self) -> KeyArray:
        return self.storage[: self.fill]


class BucketBuffers:
    """The k bucket buffers owned by one stripe, stored as a (k, b) array."""

    def __init__(self, bucket_count: int, block_size: int):
        self.storage = np.empty((bucket_count, block_size), dtype=np.uint64)
        self.fill = np.zeros(bucket_count, dtype=np.int64)

    @property
    def block_size(self) -> int:
        return self.storage.shape[1]

    def buffer(self, bucket: int) -> BucketBuffer:
        return BucketBuffer(bucket, self.storage[bucket], int(self.fill[bucket]))

    def tail(self, bucket: int) -> KeyArray:
        return self.storage[bucket, : self.fill[bucket]]

    def push(self, keys: KeyArray, ids: npt.NDArray[np.intp]) -> Tuple[KeyArray, npt.NDArray[np.intp]]:
        """
        Append classified keys. Returns the blocks that became full, as a
        (m, b) array, with the bucket label of each block. A bucket fills at
        most one block per b pushed keys, so m * b never exceeds the number
        of keys seen so far.
        """
        bucket_count, block_size = self.storage.shape
        order = np.argsort(ids, kind="stable")
        keys = keys[order]
        ids = ids[order]
        counts = np.bincount(ids, minlength=bucket_count)
        group_start = np.cumsum(counts) - counts
        pos = self.fill[ids] + (np.arange(ids.size) - group_start[ids])

        total = self.fill + counts
        full = total // block_size
        block_start = np.cumsum(full) - full
        blocks = np.empty((int(full.sum()), block_size), dtype=np.uint64)
        labels = np.repeat(np.arange(bucket_count), full)

        for bucket in np.flatnonzero((full > 0) & (self.fill > 0)):
            pending = self.fill[bucket]
            blocks[block_start[bucket], :pending] = self.storage[bucket, :pending]

        to_block = (pos // block_size) < full[ids]
        if to_block.any():
            sel = ids[to_block]
            sel_pos = pos[to_block]
            blocks[block_start[sel] + sel_pos // block_size, sel_pos % block_size] = keys[to_block]
        rest = ~to_block
        if rest.any():
            sel = ids[rest]
            self.storage[sel, pos[rest] - full[sel] * block_size] = keys[rest]

        self.fill = total - full * block_size
        return blocks, labels


@dataclass
class BucketBoundary:
    """Half-open range [begin, end) of one bucket inside the segment."""
    bucket: int
    begin: int
    end: int
    homogeneous: bool = False
    already_sorted: bool = False

    @property
    def size(self) -> int:
        return self.end - self.begin


@dataclass
class BlockPartitionState:
    """Shared state of one partitioning step."""
    length: int
    block_size: int
    bucket_count: int
    workers: int
    stripes: List[Tuple[int, int]]
    buffers: List[BucketBuffers]
    block_buckets: npt.NDArray[np.int64]
    bucket_sizes: npt.NDArray[np.int64]
    claims: ClaimCounter = field(default_factory=ClaimCounter)
    overflow: Optional[KeyArray] = None

    @classmethod
    def create(cls, length: int, bucket_count: int, block_size: int, workers: int = 1) -> "BlockPartitionState":
        full_blocks = length // block_size
        stripe_count = max(1, min(workers, full_blocks))
        per_stripe, extra = divmod(full_blocks, stripe_count)
        stripes = []
        start_block = 0
        for s in range(stripe_count):
            end_block = start_block + per_stripe + (1 if s < extra else 0)
            end = length if s == stripe_count - 1 else end_block * block_size
            stripes.append((start_block * block_size, end))
            start_block = end_block
        slot_count = -(-length // block_size)
        return cls(
            length=length,
            block_size=block_size,
            bucket_count=bucket_count,
            workers=workers,
            stripes=stripes,
            buffers=[BucketBuffers(bucket_count, block_size) for _ in range(stripe_count)],
            block_buckets=np.full(slot_count, -1, dtype=np.int64),
            bucket_sizes=np.zeros(bucket_count, dtype=np.int64),
        )

    def block_lists(self) -> List[npt.NDArray[np.intp]]:
        """Slot indices of the flushed blocks, per bucket."""
        slots = np.flatnonzero(self.block_buckets >= 0)
        labels = self.block_buckets[slots]
        return [slots[labels == bucket] for bucket in range(self.bucket_count)]


def _run_workers(workers: int, task: Callable[[], None]) -> None:
    if workers <= 1:
        task()
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for _ in range(workers)]
        for future in futures:
            future.result()


def _classify_stripe(segment: KeyArray, stripe: int, model: PartitionModel, state: BlockPartitionState) -> npt.NDArray[np.int64]:
    begin, end = state.stripes[stripe]
    buffers = state.buffers[stripe]
    block_size = state.block_size
    batch = max(block_size, (CLASSIFY_BATCH // block_size) * block_size)
    counts = np.zeros(state.bucket_count, dtype=np.int64)
    read = write = begin
    while read < end:
        stop = min(read + batch, end)
        chunk = segment[read:stop].copy()
        read = stop
        ids = model.bucket_indices(chunk)
        counts += np.bincount(ids, minlength=state.bucket_count)
        blocks, labels = buffers.push(chunk, ids)
        if labels.size:
            segment[write : write + labels.size * block_size] = blocks.ravel()
            slot = write // block_size
            state.block_buckets[slot : slot + labels.size] = labels
            write += labels.size * block_size
    return counts


def classify_and_flush(
    segment: KeyArray,
    model: PartitionModel,
    state: BlockPartitionState,
    workers: Optional[int] = None,
) -> BlockPartitionState:
    """Classify every key and flush full buffers into claimed blocks of its stripe."""
    workers = workers or state.workers
    stripe_counts: List[Optional[npt.NDArray[np.int64]]] = [None] * len(state.stripes)
    stripe_claims = ClaimCounter()

    def work() -> None:
        while True:
            stripe = stripe_claims.fetch_add()
            if stripe >= len(state.stripes):
                return
            stripe_counts[stripe] = _classify_stripe(segment, stripe, model, state)

    _run_workers(min(workers, len(state.stripes)), work)
    state.bucket_sizes = np.sum(stripe_counts, axis=0).astype(np.int64)
    return state


def _swap_chains(
    state: BlockPartitionState,
    bounds: npt.NDArray[np.int64],
    blocks_per_bucket: npt.NDArray[np.int64],
    first_slot: npt.NDArray[np.int64],
) -> List[Tuple[List[int], bool]]:
    """
    Assign every misplaced block a free slot of its bucket and decompose the
    moves into disjoint chains: paths ending in an empty slot, and cycles.
    """
    slot_count = state.block_buckets.size
    labels = state.block_buckets
    sources = np.flatnonzero(labels >= 0)
    order = np.lexsort((sources, labels[sources]))
    sources = sources[order]
    source_labels = labels[sources]
    group_ends = np.searchsorted(source_labels, np.arange(state.bucket_count), side="right")

    dest = np.full(slot_count, -1, dtype=np.int64)
    group_begin = 0
    for bucket in np.flatnonzero(blocks_per_bucket):
        group = sources[group_begin : group_ends[bucket]]
        group_begin = group_ends[bucket]
        lo, hi = first_slot[bucket], first_slot[bucket] + blocks_per_bucket[bucket]
        inside = (group >= lo) & (group < hi)
        free = np.setdiff1d(np.arange(lo, hi), group[inside], assume_unique=True)
        dest[group[~inside]] = free

    movers = np.flatnonzero(dest >= 0)
    is_mover = dest >= 0
    is_target = np.zeros(slot_count, dtype=np.bool_)
    is_target[dest[movers]] = True
    visited = np.zeros(slot_count, dtype=np.bool_)

    chains: List[Tuple[List[int], bool]] = []
    for start in movers:
        if is_target[start]:
            continue
        chain = [int(start)]
        visited[start] = True
        slot = int(dest[start])
        while is_mover[slot]:
            chain.append(slot)
            visited[slot] = True
            slot = int(dest[slot])
        chain.append(slot)
        chains.append((chain, False))
    for start in movers:
        if visited[start]:
            continue
        chain = [int(start)]
        visited[start] = True
        slot = int(dest[start])
        while slot != start:
            chain.append(slot)
            visited[slot] = True
            slot = int(dest[slot])
        chains.append((chain, True))
    return chains


def _follow_chain(segment: KeyArray, chain: List[int], is_cycle: bool, state: BlockPartitionState) -> None:
    b = state.block_size
    carried = segment[chain[0] * b : chain[0] * b + b].copy()
    targets = chain[1:] + [chain[0]] if is_cycle else chain[1:]
    for slot in targets[:-1]:
        displaced = segment[slot * b : slot * b + b].copy()
        segment[slot * b : slot * b + b] = carried
        carried = displaced
    last = targets[-1]
    if last * b + b > state.length:
        state.overflow = carried
    else:
        segment[last * b : last * b + b] = carried


def permute_blocks(segment: KeyArray, state: BlockPartitionState, workers: Optional[int] = None) -> List[BucketBoundary]:
    """Make each bucket contiguous; returns exact bucket boundaries."""
    workers = workers or state.workers
    n = state.length
    b = state.block_size
    k = state.bucket_count
    bounds = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(state.bucket_sizes, out=bounds[1:])
    flushed = state.block_buckets[state.block_buckets >= 0]
    blocks_per_bucket = np.bincount(flushed, minlength=k).astype(np.int64)
    first_slot = (bounds[:-1] + b - 1) // b

    chains = _swap_chains(state, bounds, blocks_per_bucket, first_slot)
    state.claims.reset()

    def work() -> None:
        while True:
            index = state.claims.fetch_add()
            if index >= len(chains):
                return
            chain, is_cycle = chains[index]
            _follow_chain(segment, chain, is_cycle, state)

    _run_workers(min(workers, max(1, len(chains))), work)

    block_begin = first_slot * b
    block_end = block_begin + blocks_per_bucket * b

    beyond = np.empty(0, dtype=np.uint64)
    if state.overflow is not None:
        partial = (n // b) * b
        segment[partial:n] = state.overflow[: n - partial]
        beyond = state.overflow[n - partial :]

    # Keys of a last block hanging past its bucket end, saved before any gap is written.
    overhang: List[Optional[KeyArray]] = [None] * k
    for bucket in np.flatnonzero((blocks_per_bucket > 0) & (block_end > bounds[1:])):
        stop = bounds[bucket + 1]
        pieces = [segment[stop : min(block_end[bucket], n)].copy()]
        if block_end[bucket] > n:
            pieces.append(beyond)
        overhang[bucket] = np.concatenate(pieces)

    for bucket in np.flatnonzero(state.bucket_sizes):
        sources = [overhang[bucket]] if overhang[bucket] is not None else []
        sources.extend(buffers.tail(bucket) for buffers in state.buffers if buffers.fill[bucket])
        fill = np.concatenate(sources) if sources else np.empty(0, dtype=np.uint64)
        lo, hi = bounds[bucket], bounds[bucket + 1]
        if blocks_per_bucket[bucket] == 0:
            gaps = [(lo, hi)]
        else:
            gaps = [(lo, block_begin[bucket]), (block_end[bucket], hi)]
        used = 0
        for gap_lo, gap_hi in gaps:
            if gap_hi > gap_lo:
                segment[gap_lo:gap_hi] = fill[used : used + gap_hi - gap_lo]
                used += gap_hi - gap_lo
        if used != fill.size:
            raise RuntimeError(f"bucket {bucket}: {fill.size} pending keys for {used} gap slots")

    return [BucketBoundary(bucket, int(bounds[bucket]), int(bounds[bucket + 1])) for bucket in range(k)]


def mark_homogeneous(segment: KeyArray, boundaries: List[BucketBoundary]) -> List[BucketBoundary]:
    """Flag buckets that contain a single distinct key."""
    for boundary in boundaries:
        if boundary.size == 0:
            continue
        first = segment[boundary.begin]
        if first != segment[boundary.end - 1]:
            continue
        if np.all(segment[boundary.begin : boundary.end] == first):
            boundary.homogeneous = True
            boundary.already_sorted = True
    return boundaries


def partition(
    segment: KeyArray,
    model: PartitionModel,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
) -> List[BucketBoundary]:
    """Run classify, permute and homogeneity marking on a segment view."""
    length = segment.size
    b = effective_block_size(length, model.bucket_count, block_size)
    state = BlockPartitionState.create(length, model.bucket_count, b, workers)
    classify_and_flush(segment, model, state, workers)
    boundaries = permute_blocks(segment, state, workers)
    mark_homogeneous(segment, boundaries)
    logger.debug(
        "partitioned %d keys into %d buckets (block=%d, workers=%d)",
        length, model.bucket_count, b, workers,
    )
    return boundaries
