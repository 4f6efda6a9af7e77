"""Exact and sliced Wasserstein-1 distances between small empirical point clouds.

Clouds are ``n x d`` arrays of samples with uniform weights. These routines are
meant as ground truth at desk scale: `exact_w1` solves the transport problem
exactly (assignment for balanced clouds, a linear program otherwise) and is
capped at 1024 points per cloud; `sliced_w1` is the scalable surrogate.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

SIZE_CAP = 1024


class CloudDimensionError(ValueError):
    """The two clouds do not live in the same ambient dimension."""


class CloudSizeError(ValueError):
    """A cloud exceeds the exact-solver size cap."""


def _as_cloud(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a nonempty n x d point array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point cloud contains non-finite entries")
    return x


def exact_w1(X, Y) -> float:
    """Exact Wasserstein-1 distance between two uniform empirical measures.

    Euclidean ground metric. Balanced clouds reduce to a minimum-cost
    assignment; unbalanced clouds are solved as a linear program over the
    full coupling polytope (row marginals 1/n, column marginals 1/m).
    """
    X, Y = _as_cloud(X), _as_cloud(Y)
    if X.shape[1] != Y.shape[1]:
        raise CloudDimensionError(
            f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}"
        )
    n, m = X.shape[0], Y.shape[0]
    if max(n, m) > SIZE_CAP:
        raise CloudSizeError(
            f"cloud size {max(n, m)} exceeds exact-solver cap {SIZE_CAP}; "
            "use sliced_w1 instead"
        )
    cost = cdist(X, Y)
    if n == m:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean())
    # min <cost, gamma> s.t. gamma >= 0, gamma 1 = 1/n, gamma^T 1 = 1/m
    # (one column-marginal constraint is redundant and dropped)
    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n)
    a_rows = sparse.csr_matrix(
        (np.ones(n * m), (row_idx, np.arange(n * m))), shape=(n, n * m)
    )
    a_cols = sparse.csr_matrix(
        (np.ones(n * m), (col_idx, np.arange(n * m))), shape=(m, n * m)
    )
    a_eq = sparse.vstack([a_rows, a_cols[:-1]])
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m - 1, 1.0 / m)])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1_1d(x, y) -> float:
    """W1 between equal-size 1-D samples: mean |x_(i) - y_(i)| over order stats."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"sample counts differ: {x.shape[0]} vs {y.shape[0]}")
    return float(np.mean(np.abs(np.sort(x) - np.sort(y))))


def sliced_w1(X, Y, n_projections: int = 64, rng=None) -> float:
    """Sliced W1: mean of 1-D W1 over random unit projection directions.

    Unequal cloud sizes are handled by uniformly subsampling the larger
    cloud (without replacement) down to the smaller one.
    """
    X, Y = _as_cloud(X), _as_cloud(Y)
    if X.shape[1] != Y.shape[1]:
        raise CloudDimensionError(
            f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}"
        )
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    rng = np.random.default_rng(rng)
    n = min(X.shape[0], Y.shape[0])
    if X.shape[0] > n:
        X = X[rng.choice(X.shape[0], size=n, replace=False)]
    if Y.shape[0] > n:
        Y = Y[rng.choice(Y.shape[0], size=n, replace=False)]
    d = X.shape[1]
    dirs = rng.standard_normal((n_projections, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    xs = np.sort(X @ dirs.T, axis=0)
    ys = np.sort(Y @ dirs.T, axis=0)
    return float(np.mean(np.abs(xs - ys)))
