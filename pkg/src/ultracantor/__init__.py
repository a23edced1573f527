"""Ultrametric Cantor sets as weighted trees."""

__version__ = "0.1.0"

from .errors import DomainError  # noqa: E402
from .tree import WeightedTree, fit_decay, reduce, regular_tree  # noqa: E402

__all__ = ["DomainError", "WeightedTree", "fit_decay", "reduce", "regular_tree", "__version__"]
