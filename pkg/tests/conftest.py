"""
Shared fixtures for the test suite.
"""
from typing import Callable, Dict

import numpy as np
import pytest

from app.models.schemas import DatasetSpec, SortConfig
from app.services.datasets import generate
from app.services.keys import KeyArray


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def make_dataset() -> Callable[..., KeyArray]:
    """Factory: make_dataset(name, n, seed=0) -> encoded keys."""
    def factory(name: str, n: int, seed: int = 0) -> KeyArray:
        return generate(DatasetSpec(name=name, n=n, seed=seed))
    return factory


@pytest.fixture
def adversarial() -> Callable[[int], Dict[str, KeyArray]]:
    """Factory: adversarial(n) -> named inputs that stress pivot and bucket choices."""
    def factory(n: int) -> Dict[str, KeyArray]:
        ramp = np.arange(n, dtype=np.uint64)
        half = n // 2
        organ = np.concatenate([np.arange(half, dtype=np.uint64), np.arange(n - half, dtype=np.uint64)[::-1]])
        near_constant = np.full(n, 42, dtype=np.uint64)
        near_constant[n // 3] = 7
        return {
            "sorted": ramp.copy(),
            "reversed": ramp[::-1].copy(),
            "all_equal": np.full(n, 9, dtype=np.uint64),
            "organ_pipe": organ,
            "near_constant": near_constant,
        }
    return factory


@pytest.fixture
def small_config() -> SortConfig:
    """Small thresholds so recursion and both partition variants run on small inputs."""
    return SortConfig(
        rmi_bucket_count=64,
        tree_bucket_count=16,
        rmi_model_count=64,
        min_rmi_input=20_000,
        radix_base_case=256,
        block_size=64,
        seed=3,
    )


class PerfectBuckets:
    """Partition model that buckets keys by value ranges given as sorted upper bounds."""

    def __init__(self, upper_bounds):
        self.upper_bounds = np.asarray(upper_bounds, dtype=np.uint64)
        self.bucket_count = self.upper_bounds.size + 1

    def bucket_indices(self, keys):
        return np.searchsorted(self.upper_bounds, np.asarray(keys, dtype=np.uint64), side="left").astype(np.intp)

    def bucket_index(self, x):
        return int(self.bucket_indices(np.array([x], dtype=np.uint64))[0])

    def is_equality_bucket(self, bucket):
        return False


@pytest.fixture
def perfect_buckets() -> Callable[..., PerfectBuckets]:
    return PerfectBuckets
