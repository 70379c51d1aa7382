"""
Pydantic models and schemas for the learned-partition sorting library.
Configuration, dataset descriptions, benchmark records and the request and
response bodies of the HTTP surface.
"""
import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

ElementKind = Literal["float64", "uint64"]


def _require_power_of_two(value: int, name: str) -> int:
    if value < 2 or value & (value - 1):
        raise ValueError(f"{name} must be a power of two >= 2, got {value}")
    return value


# =====================
# Sorting configuration
# =====================

class SortConfig(BaseModel):
    """Tuning knobs of the hybrid sorter and the classic LearnedSort path."""
    model_config = ConfigDict(frozen=True)

    rmi_bucket_count: int = Field(default=1024, description="Output buckets of a learned partition")
    tree_bucket_count: int = Field(default=256, description="Leaves of the splitter tree")
    rmi_model_count: int = Field(default=1000, ge=1, description="Second-level models of the RMI")
    min_rmi_input: int = Field(default=100_000, gt=0, description="Smallest segment that may use the RMI")
    max_duplicate_fraction: float = Field(default=0.10, gt=0, lt=1)
    radix_base_case: int = Field(default=4096, gt=0)
    insertion_base_case: int = Field(default=16, gt=0)
    first_sample_fraction: float = Field(default=0.01, gt=0, le=1)
    first_sample_oversampling: int = Field(default=16, ge=1)
    rmi_sample_fraction: float = Field(default=0.01, gt=0, le=1)
    rmi_sample_cap: int = Field(default=1 << 20, ge=2)
    block_size: int = Field(default=2048, ge=16, description="Keys per block (16 KiB)")
    equality_buckets: bool = True
    monotonic_rmi: bool = Field(default=True, description="Monotone RMI for the classic LearnedSort path")
    forward_rmi: bool = Field(default=False, description="Sort learned base-case buckets by model counting sort")
    seed: int = Field(default=0, ge=0, lt=1 << 64)
    workers: int = Field(default=1, ge=1)

    @field_validator("rmi_bucket_count")
    @classmethod
    def validate_rmi_bucket_count(cls, v):
        return _require_power_of_two(v, "rmi_bucket_count")

    @field_validator("tree_bucket_count")
    @classmethod
    def validate_tree_bucket_count(cls, v):
        return _require_power_of_two(v, "tree_bucket_count")

    @model_validator(mode="after")
    def validate_base_cases(self):
        if self.insertion_base_case > self.radix_base_case:
            raise ValueError("insertion_base_case must not exceed radix_base_case")
        return self

    def first_sample_size(self, n: int) -> int:
        cap = 2 * self.tree_bucket_count * self.first_sample_oversampling
        return max(2, math.ceil(min(self.first_sample_fraction * n, cap)))

    def rmi_sample_size(self, n: int) -> int:
        return max(2, math.ceil(min(self.rmi_sample_fraction * n, self.rmi_sample_cap)))


# =====================
# Datasets
# =====================

class DatasetSpec(BaseModel):
    """A synthetic dataset: generator name, size, seed and parameter overrides."""
    name: str = Field(..., min_length=1)
    n: int = Field(..., gt=0)
    seed: int = Field(default=0, ge=0, lt=1 << 64)
    params: Dict[str, float] = Field(default_factory=dict)
    element_kind: Optional[ElementKind] = None

    @field_validator("name")
    @classmethod
    def normalize_name(cls, v):
        return v.strip().lower()


class DatasetSummary(BaseModel):
    """Statistics of a generated key array."""
    name: str
    n: int
    seed: int
    element_kind: ElementKind
    min_key: int
    max_key: int
    distinct: int
    duplicate_fraction: float
    path: Optional[str] = None


class GenerateRequest(BaseModel):
    """Schema for generating a dataset over HTTP."""
    name: str
    n: int = Field(..., gt=0, le=10_000_000)
    seed: int = Field(default=0, ge=0)
    out_path: Optional[str] = Field(None, description="Optional path of a key file to write")


# =====================
# Benchmarks
# =====================

class BenchRecord(BaseModel):
    """One timed run of one algorithm."""
    algorithm: str
    dataset: str
    n: int = Field(..., ge=0)
    workers: int = Field(..., ge=1)
    run_index: int = Field(..., ge=0)
    elapsed_ns: int = Field(..., ge=0)
    verified: bool

    @computed_field
    @property
    def keys_per_second(self) -> float:
        return self.n / (max(self.elapsed_ns, 1) * 1e-9)


class BenchSummary(BaseModel):
    """Mean and standard deviation over the verified runs of one algorithm."""
    algorithm: str
    dataset: str
    n: int
    workers: int
    runs: int
    mean_elapsed_ns: float
    std_elapsed_ns: float
    mean_keys_per_second: float
    std_keys_per_second: float


class BenchReport(BaseModel):
    """All records of a benchmark invocation plus per-algorithm summaries."""
    records: List[BenchRecord] = Field(default_factory=list)
    summaries: List[BenchSummary] = Field(default_factory=list)

    @computed_field
    @property
    def all_verified(self) -> bool:
        return all(record.verified for record in self.records)


class BenchRequest(BaseModel):
    """Schema for running a benchmark over HTTP."""
    algorithms: List[str] = Field(..., min_length=1)
    dataset: str
    n: int = Field(..., gt=0, le=10_000_000)
    runs: int = Field(default=1, ge=1, le=100)
    workers: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)


# =====================
# Pivot quality
# =====================

class PivotQualityReport(BaseModel):
    """Distance of a pivot set from the perfect splitters."""
    method: Literal["random", "learned"]
    pivot_count: int = Field(..., ge=0)
    distance: float = Field(..., ge=0)
    eta: Optional[float] = Field(None, ge=0, le=0.5, description="Only for single-pivot runs")
    requested_pivots: Optional[int] = None

    @computed_field
    @property
    def shortfall(self) -> bool:
        return self.requested_pivots is not None and self.pivot_count < self.requested_pivots


class PivotQualityTrial(BaseModel):
    trial: int
    random: PivotQualityReport
    learned: PivotQualityReport


class PivotQualityResult(BaseModel):
    """Per-trial reports and the means per method."""
    dataset: str
    n: int
    pivots: int
    seed: int
    trials: List[PivotQualityTrial]
    mean_random: float
    mean_learned: float

    @computed_field
    @property
    def ratio(self) -> float:
        return self.mean_learned / self.mean_random if self.mean_random > 0 else math.inf


class PivotQualityRequest(BaseModel):
    """Schema for running the pivot-quality experiment over HTTP."""
    dataset: str = "uniform"
    n: int = Field(default=1_000_000, gt=1, le=10_000_000)
    pivots: int = Field(default=255, ge=1)
    trials: int = Field(default=10, ge=1, le=100)
    seed: int = Field(default=0, ge=0)


# =====================
# Sorting over HTTP
# =====================

class SortRequest(BaseModel):
    """Keys (unsigned 64-bit integers) or float values to sort."""
    algorithm: str = "aips2o"
    keys: Optional[List[int]] = None
    values: Optional[List[float]] = None
    workers: int = Field(default=1, ge=1)

    @field_validator("keys")
    @classmethod
    def validate_key_range(cls, v):
        if v is not None and any(k < 0 or k >= 1 << 64 for k in v):
            raise ValueError("keys must be unsigned 64-bit integers")
        return v

    @model_validator(mode="after")
    def validate_payload(self):
        if (self.keys is None) == (self.values is None):
            raise ValueError("provide exactly one of 'keys' or 'values'")
        return self


class SortResponse(BaseModel):
    algorithm: str
    n: int
    elapsed_ns: int
    verified: bool
    keys: Optional[List[int]] = None
    values: Optional[List[float]] = None
