"""
Synthetic dataset generators and the binary key file format.

Every generator draws from a Philox counter-based generator seeded by the
spec, so the same spec yields a bitwise-identical array on every platform.
Key files hold an 8-byte little-endian count followed by that many
little-endian 64-bit keys.
"""
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Tuple, Union

import numpy as np
import numpy.typing as npt

from app.config.datasets import DATASETS, get_dataset_kind, get_dataset_params
from app.models.schemas import DatasetSpec, DatasetSummary
from app.services.cdf_models import duplicate_fraction
from app.services.exceptions import KeyFileFormatError, UnknownDatasetError
from app.services.keys import KeyArray, as_keys

logger = logging.getLogger(__name__)

HEADER_BYTES = 8
KEY_BYTES = 8

Generator = Callable[[np.random.Generator, int, Dict[str, float]], np.ndarray]
PathLike = Union[str, Path]


def philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# =====================
# Generators
# =====================

def _uniform(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    return rng.uniform(params["low"], params["high"], size=n)


def _normal(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    return rng.normal(params["mean"], params["sigma"], size=n)


def _lognormal(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    return rng.lognormal(params["mean"], params["sigma"], size=n)


def _mixgauss(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    components = int(params["components"])
    means = rng.uniform(0.0, n, size=components)
    chosen = rng.integers(0, components, size=n)
    return rng.normal(means[chosen], params["sigma_fraction"] * n)


def _exponential(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    return rng.exponential(1.0 / params["rate"], size=n)


def _chisquared(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    return rng.chisquare(params["dof"], size=n)


def _rootdups(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    return np.arange(n, dtype=np.uint64) % np.uint64(max(1, math.isqrt(n)))


def _twodups(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    i = np.arange(n, dtype=np.uint64)
    return (i * i + np.uint64(n // 2)) % np.uint64(n)


@lru_cache(maxsize=8)
def zipf_cdf(domain: int, exponent: float) -> npt.NDArray[np.float64]:
    """Cumulative Zipf mass of ranks 1..domain, normalized by the harmonic sum."""
    weights = np.arange(1, domain + 1, dtype=np.float64) ** -exponent
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return cdf


def _zipf(rng: np.random.Generator, n: int, params: Dict[str, float]) -> np.ndarray:
    domain = int(params["domain"])
    cdf = zipf_cdf(domain, float(params["exponent"]))
    ranks = np.searchsorted(cdf, rng.random(size=n), side="right") + 1
    return np.minimum(ranks, domain).astype(np.uint64)


GENERATORS: Dict[str, Generator] = {
    "uniform": _uniform,
    "normal": _normal,
    "lognormal": _lognormal,
    "mixgauss": _mixgauss,
    "exponential": _exponential,
    "chisquared": _chisquared,
    "rootdups": _rootdups,
    "twodups": _twodups,
    "zipf": _zipf,
}


def generate_values(spec: DatasetSpec) -> np.ndarray:
    """
    Raw values of a dataset: float64 for continuous distributions, uint64
    for the integer sequences.

    Raises:
        UnknownDatasetError: name not in the registry
    """
    generator = GENERATORS.get(spec.name)
    if generator is None:
        raise UnknownDatasetError(spec.name, DATASETS)
    params = get_dataset_params(spec.name, spec.n, spec.params)
    values = generator(philox(spec.seed), spec.n, params)
    kind = spec.element_kind or get_dataset_kind(spec.name)
    return values.astype(np.float64 if kind == "float64" else np.uint64, copy=False)


def generate(spec: DatasetSpec) -> KeyArray:
    """Dataset as sort keys (floats go through the order-preserving encoding)."""
    keys = as_keys(generate_values(spec))
    logger.info("generated %s: n=%d seed=%d", spec.name, spec.n, spec.seed)
    return keys


def summarize(spec: DatasetSpec, keys: KeyArray, path: Union[PathLike, None] = None) -> DatasetSummary:
    ordered = np.sort(keys)
    distinct = int(np.count_nonzero(ordered[1:] != ordered[:-1])) + 1 if ordered.size else 0
    return DatasetSummary(
        name=spec.name,
        n=int(keys.size),
        seed=spec.seed,
        element_kind=spec.element_kind or get_dataset_kind(spec.name),
        min_key=int(ordered[0]) if ordered.size else 0,
        max_key=int(ordered[-1]) if ordered.size else 0,
        distinct=distinct,
        duplicate_fraction=duplicate_fraction(ordered),
        path=str(path) if path is not None else None,
    )


# =====================
# Key files
# =====================

def read_keys(path: PathLike) -> KeyArray:
    """
    Read a count-prefixed key file.

    Raises:
        KeyFileFormatError: size differs from 8 + 8 * count
        OSError: the file cannot be read
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise OSError(e.errno, f"cannot read key file {path}: {e.strerror}") from e
    if len(raw) < HEADER_BYTES:
        raise KeyFileFormatError(str(path), None, len(raw))
    count = int.from_bytes(raw[:HEADER_BYTES], "little")
    expected = HEADER_BYTES + KEY_BYTES * count
    if len(raw) != expected:
        raise KeyFileFormatError(str(path), expected, len(raw))
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    return np.frombuffer(raw, dtype="<u8", count=count, offset=HEADER_BYTES).astype(np.uint64)


def write_keys(path: PathLike, keys: npt.ArrayLike) -> None:
    """Write keys in the count-prefixed format; inverse of read_keys."""
    path = Path(path)
    arr = np.ascontiguousarray(keys, dtype=np.uint64)
    payload = arr.size.to_bytes(HEADER_BYTES, "little") + arr.astype("<u8", copy=False).tobytes()
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise OSError(e.errno, f"cannot write key file {path}: {e.strerror}") from e
    logger.info("wrote %d keys to %s", arr.size, path)


def load_dataset(dataset: str, n: int, seed: int = 0) -> Tuple[str, KeyArray]:
    """
    Resolve a dataset argument: an existing file is read with read_keys
    (and truncated to n keys when n is smaller), anything else is a
    generator name.

    Returns:
        (label, keys)
    """
    candidate = Path(dataset)
    if candidate.is_file():
        keys = read_keys(candidate)
        if 0 < n < keys.size:
            keys = keys[:n].copy()
        return candidate.stem, keys
    spec = DatasetSpec(name=dataset, n=n, seed=seed)
    return spec.name, generate(spec)
