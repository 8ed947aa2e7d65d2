"""Slow reference implementations used only by tests.

Each oracle recomputes a quantity through a different algorithm than the
library code: Floyd-Warshall vs breadth-first search for shortest paths,
a transport linear program vs the CDF formula for Wasserstein-1, and
central finite differences vs manual backprop for gradients. Nothing here
shares code with the modules it checks.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.optimize import linprog

UNREACHABLE = -1  # deliberately redeclared; see module docstring


def floyd_warshall(adjacency: np.ndarray) -> np.ndarray:
    """All-pairs shortest hop counts by the O(n^3) dynamic program.
    Unreachable pairs get -1."""
    n = adjacency.shape[0]
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    dist[adjacency.astype(bool)] = 1.0
    for k in range(n):
        np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :], out=dist)
    out = np.where(np.isinf(dist), UNREACHABLE, dist).astype(np.int64)
    return out


def w1_lp(p: np.ndarray, q: np.ndarray) -> float:
    """Wasserstein-1 between histograms on supports {0..len-1} via the
    transport LP. Intended for small supports (tests keep len <= 10)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    size = max(len(p), len(q))
    pp = np.zeros(size)
    qq = np.zeros(size)
    pp[: len(p)] = p
    qq[: len(q)] = q

    cost = np.abs(np.subtract.outer(np.arange(size), np.arange(size))).ravel()
    # Row sums match pp, column sums match qq.
    a_eq = np.zeros((2 * size, size * size))
    for i in range(size):
        a_eq[i, i * size:(i + 1) * size] = 1.0
        a_eq[size + i, i::size] = 1.0
    b_eq = np.concatenate([pp, qq])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def finite_diff_grads(
    loss_fn: Callable[[dict[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    eps: float = 1e-4,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar loss over a dict of arrays."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value, dtype=np.float64)
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = loss_fn(params)
            flat[j] = orig - eps
            lo = loss_fn(params)
            flat[j] = orig
            gflat[j] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def max_rel_err(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]
) -> float:
    """Worst elementwise relative error between two gradient dicts, with a
    floor on the denominator so near-zero entries compare absolutely."""
    worst = 0.0
    for name in analytic:
        a = analytic[name]
        b = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst
