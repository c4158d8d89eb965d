import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_strains(rng, n):
    """Random strain coefficient vectors, O(1) magnitude."""
    return rng.normal(size=(n, 5))


def central_difference(fn, x, h, args=()):
    """Gradient of a vector field fn: R^3 -> R^k by central differences.

    Returns d fn_i / d x_j with shape (k, 3).
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        cols.append((np.asarray(fn(x + e, *args)) - np.asarray(fn(x - e, *args)))
                    / (2 * h))
    return np.stack(cols, axis=-1)


def second_difference_laplacian(fn, x, h, args=()):
    """Componentwise Laplacian of fn: R^3 -> R^k, centered second differences."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x, *args))
    out = np.zeros_like(f0)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        out = out + (np.asarray(fn(x + e, *args)) + np.asarray(fn(x - e, *args))
                     - 2 * f0) / h ** 2
    return out
