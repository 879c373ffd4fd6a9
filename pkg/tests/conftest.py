"""Shared node sets and helpers for the test suite."""

import numpy as np
import pytest

from app.services.node_service import generate_nodes, uniform_grid_nodes
from app.services.rbf_service import monomial_exponents


@pytest.fixture(scope="session")
def scattered_nodes():
    """Advancing-front fill at h = 0.05, seed 1 (~500 nodes)."""
    return generate_nodes(0.05, 1)


@pytest.fixture(scope="session")
def coarse_nodes():
    """Advancing-front fill at h = 0.1, seed 1."""
    return generate_nodes(0.1, 1)


@pytest.fixture(scope="session")
def grid_nodes():
    """11 x 11 tensor grid, spacing 0.1."""
    return uniform_grid_nodes(0.1)


def monomial(a, b):
    """Samples of x^a y^b and its analytic Laplacian."""

    def values(points):
        points = np.atleast_2d(points)
        return points[:, 0] ** a * points[:, 1] ** b

    def laplacian(point):
        x, y = point
        total = 0.0
        if a >= 2:
            total += a * (a - 1) * x ** (a - 2) * y ** b
        if b >= 2:
            total += b * (b - 1) * x ** a * y ** (b - 2)
        return total

    return values, laplacian


def monomials_up_to(m):
    return [monomial(a, b) for a, b in monomial_exponents(m)]


def random_centers(nodes, count=50, seed=0):
    """`count` distinct interior node indices drawn with a fixed seed."""
    rng = np.random.default_rng(seed)
    chosen = rng.choice(nodes.interior_indices, size=count, replace=False)
    return [int(c) for c in chosen]
