"""Empirical and classical quantization errors on grid measures."""

import json as _json

from ._core import (
    EqqError,
    Grid,
    Result,
    Sweep,
    capacity_cost,
    distant_bound,
    free_cost,
    midpoint_1d,
    pierce_greedy,
    quantize,
    w1d_cost,
    wb_cost,
)
from . import _core


def _spec_text(spec):
    return spec if isinstance(spec, str) else _json.dumps(spec)


def grid(spec, n=1, resolution=0, min_cells_per_point=64, truncate_ok=False):
    """Discretize a measure spec (dict or JSON text) on a cubic grid."""
    return _core.grid_from_spec(_spec_text(spec), n, resolution, min_cells_per_point, truncate_ok)


def sweep(spec, p, n_list, methods=("lloyd",), seed=0, restarts=1, max_iters=100, tol=1e-6, resolution=0):
    """Best quantizer error for every n, one row per n."""
    return _core.sweep(_spec_text(spec), p, list(n_list), list(methods), seed, restarts, max_iters, tol, resolution)


def bound_report(grid, p, q_lower=None, q_upper=None, empirical=True):
    """Density functionals and bound right-hand sides as a dict."""
    return _json.loads(_core.bound_report(grid, p, q_lower, q_upper, empirical))


__all__ = [
    "EqqError",
    "Grid",
    "Result",
    "Sweep",
    "bound_report",
    "capacity_cost",
    "distant_bound",
    "free_cost",
    "grid",
    "midpoint_1d",
    "pierce_greedy",
    "quantize",
    "sweep",
    "w1d_cost",
    "wb_cost",
]
