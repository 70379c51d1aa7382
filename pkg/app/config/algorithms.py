"""
Sorting algorithm registry.
Names accepted by the bench harness, the CLI and the HTTP sort endpoint.
"""
from typing import Dict, List, Literal

AlgorithmName = Literal[
    "aips2o", "learnedsort-classic", "learned-quicksort", "quicksort-learned-pivot", "reference",
]

DEFAULT_ALGORITHM = "aips2o"


ALGORITHMS: Dict[str, Dict] = {
    "aips2o": {
        "display_name": "Learned samplesort (hybrid RMI / splitter tree)",
        "parallel": True,
        "classic": False,
    },
    "learnedsort-classic": {
        "display_name": "LearnedSort (two rounds + counting sort)",
        "parallel": False,
        "classic": True,
    },
    "learned-quicksort": {
        "display_name": "Learned Quicksort",
        "parallel": False,
        "classic": True,
    },
    "quicksort-learned-pivot": {
        "display_name": "Quicksort with learned pivots",
        "parallel": False,
        "classic": True,
    },
    "reference": {
        "display_name": "Reference comparison sort",
        "parallel": False,
        "classic": False,
    },
}


def get_all_algorithms() -> List[Dict]:
    """All registered algorithms with their metadata."""
    return [{"name": name, **config} for name, config in ALGORITHMS.items()]


def supports_workers(name: str) -> bool:
    """Whether the algorithm uses the workers setting."""
    return bool(ALGORITHMS.get(name, {}).get("parallel", False))


def get_classic_algorithms() -> List[str]:
    return [name for name, config in ALGORITHMS.items() if config["classic"]]


def get_algorithm_display_name(name: str) -> str:
    config = ALGORITHMS.get(name)
    return config["display_name"] if config else name
