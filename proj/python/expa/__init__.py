"""Expanded-action rollout engine: python surface over the C++ core.

The heavy lifting lives in the `_expa` extension; this package re-exports its
public names.
"""

from ._expa import (  # noqa: F401
    Catalog,
    ConfigError,
    Policy,
    TrainAbortError,
    __version__,
    generate,
    insertion_sort_stats,
    min_swap,
    optimal_swap_average,
    optimal_tree_stats,
    pivot_sort4_stats,
    pivot_tree_dot,
    rollout,
    train,
)

__all__ = [
    "Catalog",
    "ConfigError",
    "Policy",
    "TrainAbortError",
    "generate",
    "insertion_sort_stats",
    "min_swap",
    "optimal_swap_average",
    "optimal_tree_stats",
    "pivot_sort4_stats",
    "pivot_tree_dot",
    "rollout",
    "train",
]
