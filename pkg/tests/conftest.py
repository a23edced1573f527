import numpy as np
import pytest
from hypothesis import settings

from ultracantor.tree import from_children, regular_tree

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def binary():
    return regular_tree(2, 8, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mixed_tree():
    """Root with two children; the left one has three, the right one two."""
    children = [[1, 2], [3, 4, 5], [6, 7], [], [], [], [], []]
    weights = [1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25, 0.25]
    return from_children(children, weights, max_depth=2)
