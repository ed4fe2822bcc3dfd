"""Shared oracles and builders for the test suite."""

import itertools

import numpy as np

from masekit.models import ToyLinearBagModel, ToyTwoLayerModel
from masekit.rng import philox_generator


def enumerate_vertices_minimum(c, A, b):
    """Brute-force LP reference: scan all basic feasible solutions of [A|I]."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    n_rows, n_vars = A.shape
    eq = np.hstack([A, np.eye(n_rows)])
    n_total = n_vars + n_rows
    best = None
    for cols in itertools.combinations(range(n_total), n_rows):
        basis = eq[:, cols]
        if abs(np.linalg.det(basis)) < 1e-10:
            continue
        x_basic = np.linalg.solve(basis, b)
        if np.any(x_basic < -1e-9):
            continue
        full = np.zeros(n_total)
        full[list(cols)] = x_basic
        value = c @ full[:n_vars]
        if best is None or value < best[0] - 1e-12:
            best = (value, full[:n_vars])
    return best


def sparse_lp_reference(b, sigma, budget):
    """min |g|_1 s.t. |b - Sigma g|_inf <= budget, solved by vertex enumeration."""
    n = b.size
    constraint = np.vstack([np.hstack([sigma, -sigma]), np.hstack([-sigma, sigma])])
    rhs = np.concatenate([budget + b, budget - b])
    best = enumerate_vertices_minimum(np.ones(2 * n), constraint, rhs)
    assert best is not None
    return best[0], best[1][:n] - best[1][n:]


def random_linear_bag(seed, m=4, scale=0.3):
    g = philox_generator(seed, 88)
    return ToyLinearBagModel(scale * g.normal(size=m), 0.1 * float(g.normal()))


def random_two_layer(seed, m=8, h=6):
    g = philox_generator(seed, 89)
    return ToyTwoLayerModel(
        hidden_weights=g.normal(size=(h, m)),
        hidden_bias=g.normal(size=h),
        output_weights=g.normal(size=h),
        output_bias=float(g.normal()),
    )
