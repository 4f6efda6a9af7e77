"""Closed-form loss backends over feature matrices.

All functions take feature matrices whose COLUMNS are samples ("features",
i.e. the channel vector at one spatial position). Content loss is the only
spatially aligned quantity; everything else sees features as an unordered
distribution. Inputs may be torch tensors or anything `torch.as_tensor`
accepts; outputs are 0-dim torch tensors so gradients can flow.
"""

from __future__ import annotations

import math

import torch


class DimensionError(ValueError):
    """Feature matrices have incompatible shapes for the requested loss."""


def _as_matrix(x, name: str) -> torch.Tensor:
    t = torch.as_tensor(x)
    if t.ndim != 2:
        raise DimensionError(f"{name} must be 2-D (channels x samples), got shape {tuple(t.shape)}")
    return t


def content_loss(F, P) -> torch.Tensor:
    """Half the summed squared error between spatially corresponding features."""
    F, P = _as_matrix(F, "F"), _as_matrix(P, "P")
    if F.shape != P.shape:
        raise DimensionError(f"shape mismatch: {tuple(F.shape)} vs {tuple(P.shape)}")
    return 0.5 * ((F - P) ** 2).sum()


def quad_feature_map(x) -> torch.Tensor:
    """Explicit feature map of the quadratic kernel k(x, y) = (x^T y)^2.

    Returns [x_n^2, ..., x_1^2, sqrt(2) x_n x_{n-1}, ..., sqrt(2) x_n x_1,
    sqrt(2) x_{n-1} x_{n-2}, ..., sqrt(2) x_2 x_1]: all squares in
    descending index order, then all sqrt(2)-scaled pair products.
    Length n(n+1)/2. Satisfies <phi(x), phi(y)> = (x^T y)^2.
    """
    x = torch.as_tensor(x).ravel()
    n = x.shape[0]
    squares = (x ** 2).flip(0)
    pairs = []
    for i in range(n - 1, 0, -1):
        for j in range(i - 1, -1, -1):
            pairs.append(x[i] * x[j])
    if pairs:
        cross = math.sqrt(2.0) * torch.stack(pairs)
        return torch.cat([squares, cross])
    return squares


def mmd2_quad(X, Y) -> torch.Tensor:
    """Squared MMD under the quadratic kernel, biased V-statistic.

    Columns are samples. Computed with the kernel trick; equals
    ||mean_i phi(x_i) - mean_j phi(y_j)||^2 up to floating point.
    """
    X, Y = _as_matrix(X, "X"), _as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(
            f"feature dimension mismatch: {X.shape[0]} vs {Y.shape[0]}"
        )
    kxx = (X.T @ X) ** 2
    kyy = (Y.T @ Y) ** 2
    kxy = (X.T @ Y) ** 2
    return kxx.mean() + kyy.mean() - 2.0 * kxy.mean()


def gram_style_loss(F, S) -> torch.Tensor:
    """MSE of Gram matrices, normalized by 1/(4 N^2 M^2).

    Equals mmd2_quad(F, S) / (4 N^2) for equal-shape inputs.
    """
    F, S = _as_matrix(F, "F"), _as_matrix(S, "S")
    if F.shape != S.shape:
        raise DimensionError(f"shape mismatch: {tuple(F.shape)} vs {tuple(S.shape)}")
    n, m = F.shape
    g_f = F @ F.T
    g_s = S @ S.T
    return ((g_f - g_s) ** 2).sum() / (4.0 * n * n * m * m)


def bn_matching_loss(F, S) -> torch.Tensor:
    """First-order statistics matching: per-channel (mean gap)^2 + (std gap)^2.

    Standard deviation is the population one (over columns). Column counts
    may differ; channel counts must match.
    """
    F, S = _as_matrix(F, "F"), _as_matrix(S, "S")
    if F.shape[0] != S.shape[0]:
        raise DimensionError(
            f"feature dimension mismatch: {F.shape[0]} vs {S.shape[0]}"
        )
    mean_gap = F.mean(dim=1) - S.mean(dim=1)
    std_gap = F.std(dim=1, correction=0) - S.std(dim=1, correction=0)
    return (mean_gap ** 2).sum() + (std_gap ** 2).sum()
