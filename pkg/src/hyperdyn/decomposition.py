"""Numeric checks for decomposing edge update functions into lower-arity parts.

A d-ary update function f(y_center, neighbors) decomposes at order p when
it equals the sum, over all (p-1)-subsets of the neighbors, of a fixed
p-ary kernel. Decomposability is certified here by sampling, and
non-decomposability by a sampled counterexample; no symbolic search is
attempted.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .hypergraph import Hypergraph, clique_weights

FullUpdate = Callable[[float, Sequence[float]], float]
PAryKernel = Callable[[float, Sequence[float]], float]


def subset_sum(kernel: PAryKernel, p: int, y_center: float, neighbors: Sequence[float]) -> float:
    """Sum a p-ary kernel over all (p-1)-subsets of the neighbor values."""
    return sum(kernel(y_center, v) for v in itertools.combinations(neighbors, p - 1))


def verify_decomposition(
    full_f: FullUpdate,
    kernel: PAryKernel,
    d: int,
    p: int,
    trials: int = 1000,
    rng_seed: int = 0,
    value_range: tuple[float, float] = (-1.0, 1.0),
) -> float:
    """Max absolute deviation between full_f and the subset-sum of kernel.

    Samples `trials` random argument tuples (center plus d-1 neighbors)
    uniformly from value_range. A tiny return value certifies the
    decomposition on the sampled region; a large one is a numeric
    counterexample.
    """
    if not 2 <= p <= d:
        raise ValueError(f"need 2 <= p <= d, got p={p}, d={d}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lo, hi = value_range
    worst = 0.0
    for _ in range(trials):
        values = rng.uniform(lo, hi, size=d)
        y_center, neighbors = values[0], values[1:]
        full = full_f(y_center, neighbors)
        approx = subset_sum(kernel, p, y_center, neighbors)
        worst = max(worst, abs(full - approx))
    return worst


def log_product_update(d: int) -> tuple[FullUpdate, PAryKernel]:
    """The log-of-product family and its exact pairwise kernel.

    f(y_1, ..., y_d) = log(y_1 * ... * y_d) splits into pairwise terms
    log(y_1)/(d-1) + log(y_j), one per neighbor, for positive arguments.
    """
    def full(y_center: float, neighbors: Sequence[float]) -> float:
        return float(np.log(y_center) + np.sum(np.log(np.asarray(neighbors))))

    def pair(y_center: float, subset: Sequence[float]) -> float:
        (y_j,) = subset
        return float(np.log(y_center) / (d - 1) + np.log(y_j))

    return full, pair


def sine_of_sums_update(y_center: float, neighbors: Sequence[float]) -> float:
    """Whole-edge phase coupling: sin of the summed differences to the center."""
    neigh = np.asarray(neighbors, dtype=float)
    return float(np.sin(np.sum(neigh - y_center)))


def pairwise_sine_kernel(y_center: float, subset: Sequence[float]) -> float:
    """Pairwise phase coupling sin(y_j - y_center)."""
    (y_j,) = subset
    return float(np.sin(y_j - y_center))


def effective_order_bound(k_topological: int, p_dynamical: int) -> int:
    """Upper bound on the order a hypergraph needs to carry the dynamics."""
    if k_topological < 2 or p_dynamical < 2:
        raise ValueError("both orders must be >= 2")
    return min(k_topological, p_dynamical)


def reduce_pairwise_kuramoto(h: Hypergraph) -> np.ndarray:
    """Weighted-graph coupling matrix equivalent to pairwise phase dynamics on h.

    For order-2 phase coupling the hypergraph only enters through pairwise
    co-membership counts, so the dynamics equal a weighted graph Kuramoto
    system with this matrix.
    """
    return clique_weights(h)
