"""Conditional probability trees: static training, online construction, diagnostics."""

from ._kernels import obj
from .bounds import (
    EstimateBoundCheck,
    check_estimate_bounds,
    depth_bound,
    entropy,
    estimate_bounds_batch,
    kappa,
    total_depth_bound,
)
from .tree import DepthStats, PathStep, Tree

__all__ = [
    "DepthStats",
    "EstimateBoundCheck",
    "PathStep",
    "Tree",
    "check_estimate_bounds",
    "depth_bound",
    "entropy",
    "estimate_bounds_batch",
    "kappa",
    "obj",
    "total_depth_bound",
]
