"""Independent reference implementations used to cross-check the package.

Everything here is written from the mathematical definitions with plain numpy
loops and closed forms, deliberately avoiding the package's own code paths, so
tests compare two independent routes to the same quantity.
"""

from .reference import (
    best_subset_by_response_power,
    borda_pool_oracle,
    cam_pool_oracle,
    channel_triple_loop,
    knn_brute,
    mirror_point,
    pair_rate_oracle,
    rate_logdet,
    steering_scalar,
    submatrix_best_exhaustive,
    top_grid_paths,
    waterfill_active_set,
    waterfill_bisection,
    wrapped_nearest_index,
)

__all__ = [
    "best_subset_by_response_power",
    "borda_pool_oracle",
    "cam_pool_oracle",
    "channel_triple_loop",
    "knn_brute",
    "mirror_point",
    "pair_rate_oracle",
    "rate_logdet",
    "steering_scalar",
    "submatrix_best_exhaustive",
    "top_grid_paths",
    "waterfill_active_set",
    "waterfill_bisection",
    "wrapped_nearest_index",
]
