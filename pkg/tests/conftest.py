"""Shared helpers: seeded random matrix generation and brute-force oracles."""

import numpy as np
import pytest

from consensuslab import SparseStochasticMatrix


def random_stochastic(rng, n=None, density=None):
    """A random sparse stochastic matrix with dimension <= 8 by default."""
    if n is None:
        n = int(rng.integers(1, 9))
    if density is None:
        density = float(rng.uniform(0.2, 0.9))
    rows = []
    for _ in range(n):
        support = [j for j in range(n) if rng.random() < density]
        if not support:
            support = [int(rng.integers(0, n))]
        weights = rng.random(len(support)) + 0.05
        weights /= weights.sum()
        rows.append(dict(zip(support, weights)))
    return SparseStochasticMatrix.from_rows(rows, tolerance=1e-9)


def support_matrix(matrix):
    a = np.zeros((matrix.n, matrix.n), dtype=bool)
    for i in range(matrix.n):
        a[i, matrix.row(i)[0]] = True
    return a


def brute_irreducible(matrix):
    """Reachability by boolean transitive closure (Floyd-Warshall)."""
    a = support_matrix(matrix)
    reach = a.copy()
    np.fill_diagonal(reach, True)
    for k in range(matrix.n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return bool(reach.all())


def brute_aperiodic(matrix):
    """For irreducible matrices: primitivity, i.e. some power k <= n^2 is
    entrywise positive (Wielandt's bound is (n-1)^2 + 1)."""
    a = support_matrix(matrix)
    power = a.copy()
    for _ in range(matrix.n ** 2):
        if power.all():
            return True
        power = (power.astype(np.int64) @ a.astype(np.int64)) > 0
    return bool(power.all())


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
