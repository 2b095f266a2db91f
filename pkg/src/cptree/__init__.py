"""Conditional label probability estimation in time logarithmic in the label count."""

from .cpt import Tree, kappa, obj
from .data import Example, ExampleBatch, SparseVector, hash_feature, parse_example
from .regressor import Arena, Regressor

__version__ = "0.1.0"

__all__ = [
    "Arena",
    "Example",
    "ExampleBatch",
    "Regressor",
    "SparseVector",
    "Tree",
    "hash_feature",
    "kappa",
    "obj",
    "parse_example",
]
