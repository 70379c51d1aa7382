"""
Configuration module for the learned-partition sorting library.
"""
from .algorithms import (
    ALGORITHMS,
    DEFAULT_ALGORITHM,
    AlgorithmName,
    get_algorithm_display_name,
    get_all_algorithms,
    get_classic_algorithms,
    supports_workers,
)
from .datasets import (
    DATASETS,
    DatasetName,
    get_all_datasets,
    get_dataset_display_name,
    get_dataset_kind,
    get_dataset_params,
)

__all__ = [
    "ALGORITHMS",
    "DEFAULT_ALGORITHM",
    "AlgorithmName",
    "get_algorithm_display_name",
    "get_all_algorithms",
    "get_classic_algorithms",
    "supports_workers",
    "DATASETS",
    "DatasetName",
    "get_all_datasets",
    "get_dataset_display_name",
    "get_dataset_kind",
    "get_dataset_params",
]
