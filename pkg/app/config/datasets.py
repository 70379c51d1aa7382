"""
Synthetic dataset registry.
Defines the available generators, their element kind and default parameters.
"""
from typing import Dict, List, Literal, Optional

DatasetName = Literal[
    "uniform", "normal", "lognormal", "mixgauss", "exponential",
    "chisquared", "rootdups", "twodups", "zipf",
]


# Generator configuration structure. A parameter of None is derived from n.
DATASETS: Dict[str, Dict] = {
    "uniform": {
        "display_name": "Uniform",
        "element_kind": "float64",
        "params": {"low": 0.0, "high": None},
        "description": "Uniform distribution on [0, N)",
    },
    "normal": {
        "display_name": "Normal",
        "element_kind": "float64",
        "params": {"mean": 0.0, "sigma": 1.0},
        "description": "Normal distribution with mean 0 and standard deviation 1",
    },
    "lognormal": {
        "display_name": "Log-Normal",
        "element_kind": "float64",
        "params": {"mean": 0.0, "sigma": 0.5},
        "description": "Log-normal distribution with mean 0 and sigma 0.5",
    },
    "mixgauss": {
        "display_name": "Mix Gauss",
        "element_kind": "float64",
        "params": {"components": 5, "sigma_fraction": 0.01},
        "description": "Five equally weighted Gaussians, means uniform in [0, N), sigma N/100",
    },
    "exponential": {
        "display_name": "Exponential",
        "element_kind": "float64",
        "params": {"rate": 2.0},
        "description": "Exponential distribution with rate 2",
    },
    "chisquared": {
        "display_name": "Chi-Squared",
        "element_kind": "float64",
        "params": {"dof": 4},
        "description": "Chi-squared distribution with 4 degrees of freedom",
    },
    "rootdups": {
        "display_name": "Root Dups",
        "element_kind": "uint64",
        "params": {},
        "description": "A[i] = i mod floor(sqrt(N))",
    },
    "twodups": {
        "display_name": "Two Dups",
        "element_kind": "uint64",
        "params": {},
        "description": "A[i] = (i^2 + N/2) mod N",
    },
    "zipf": {
        "display_name": "Zipf",
        "element_kind": "uint64",
        "params": {"exponent": 0.75, "domain": 1_000_000},
        "description": "Zipfian ranks with exponent 0.75 over one million values",
    },
}


def get_all_datasets() -> List[Dict]:
    """
    Get all generators with their metadata.

    Returns:
        List of generator configurations with name, display_name and element_kind
    """
    return [
        {"name": name, **{key: value for key, value in config.items() if key != "params"}}
        for name, config in DATASETS.items()
    ]


def get_dataset_kind(name: str) -> Optional[str]:
    """Element kind ("float64" or "uint64") of a generator, None if unknown."""
    config = DATASETS.get(name)
    return config["element_kind"] if config else None


def get_dataset_params(name: str, n: int, overrides: Optional[Dict[str, float]] = None) -> Dict[str, float]:
    """
    Default parameters of a generator, resolved for size n and merged with overrides.

    Args:
        name: generator name
        n: number of keys
        overrides: parameter values replacing the defaults

    Returns:
        Parameter dict with every None default replaced by n
    """
    params = {key: (n if value is None else value) for key, value in DATASETS[name]["params"].items()}
    params.update(overrides or {})
    return params


def get_dataset_display_name(name: str) -> str:
    config = DATASETS.get(name)
    return config["display_name"] if config else name
