"""Tests for decomposition verification and order bounds."""

import numpy as np
import pytest

from hyperdyn.decomposition import (
    effective_order_bound,
    log_product_update,
    pairwise_sine_kernel,
    reduce_pairwise_kuramoto,
    sine_of_sums_update,
    subset_sum,
    verify_decomposition,
)
from hyperdyn.dynamics import make_family
from hyperdyn.hypergraph import build_hypergraph, clique_weights, generate_er_hypergraph

from oracles import monolithic_edge_update


class TestVerifyDecomposition:
    def test_log_product_decomposes_pairwise(self):
        full, pair = log_product_update(4)
        dev = verify_decomposition(full, pair, d=4, p=2, trials=500, rng_seed=1,
                                   value_range=(0.1, 3.0))
        assert dev < 1e-12

    def test_sine_of_sums_fails_pairwise(self):
        dev = verify_decomposition(
            sine_of_sums_update, pairwise_sine_kernel, d=3, p=2, trials=500,
            rng_seed=1, value_range=(-np.pi, np.pi),
        )
        assert dev > 0.1

    def test_trivial_self_decomposition(self):
        def full(y_c, neigh):
            return float(y_c ** 2 + np.sum(np.cos(neigh)))

        dev = verify_decomposition(full, full, d=3, p=3, trials=200, rng_seed=2)
        assert dev == 0.0

    def test_rejects_bad_orders(self):
        full, pair = log_product_update(3)
        with pytest.raises(ValueError, match="2 <= p <= d"):
            verify_decomposition(full, pair, d=3, p=5)

    def test_subset_sum_enumerates_all_subsets(self):
        calls = []

        def kernel(y_c, subset):
            calls.append(tuple(subset))
            return 1.0

        total = subset_sum(kernel, 2, 0.0, [1.0, 2.0, 3.0])
        assert total == 3.0
        assert len(calls) == 3

    @pytest.mark.parametrize("name", ["kuramoto", "si", "mcm", "diffusion"])
    @pytest.mark.parametrize("p,d", [(2, 3), (2, 4), (3, 4)])
    def test_shipped_families_decompose_at_their_order(self, name, p, d):
        # subset-sum of the family kernel against the independently coded
        # monolithic update, on 1000 random tuples
        from hyperdyn.dynamics import kernel_eval

        fam = make_family(name, p)

        def full(y_c, neigh):
            return monolithic_edge_update(name, p, [y_c, *neigh], 0)

        def kernel(y_c, subset):
            return kernel_eval(fam, y_c, list(subset), d)

        lo, hi = (0.05, 0.95) if name in ("si", "mcm") else (-np.pi, np.pi)
        dev = verify_decomposition(full, kernel, d=d, p=p, trials=1000, rng_seed=3,
                                   value_range=(lo, hi))
        assert dev < 1e-12


class TestEffectiveOrderBound:
    @pytest.mark.parametrize("k,p,expect", [(4, 2, 2), (4, 4, 4), (3, 5, 3)])
    def test_bound(self, k, p, expect):
        assert effective_order_bound(k, p) == expect

    def test_monotone(self):
        for k in range(2, 6):
            for p in range(2, 6):
                assert effective_order_bound(k + 1, p) >= effective_order_bound(k, p)
                assert effective_order_bound(k, p + 1) >= effective_order_bound(k, p)

    def test_rejects_small_orders(self):
        with pytest.raises(ValueError):
            effective_order_bound(1, 3)


class TestPairwiseReduction:
    def test_delegates_to_clique_weights(self):
        h, _ = build_hypergraph(4, [{0, 1, 2}, {1, 2, 3}])
        assert np.array_equal(reduce_pairwise_kuramoto(h), clique_weights(h))

    def test_matrix_drives_equivalent_dynamics(self):
        from hyperdyn.dynamics import evaluate_rhs

        h = generate_er_hypergraph(15, {2: 0.1, 3: 0.05, 4: 0.02}, rng_seed=12)
        a = reduce_pairwise_kuramoto(h)
        fam = make_family("kuramoto", 2)
        rng = np.random.default_rng(0)
        x = rng.uniform(-np.pi, np.pi, size=15)
        expect = (a * np.sin(x[None, :] - x[:, None])).sum(axis=1)
        assert np.max(np.abs(evaluate_rhs(h, fam, x) - expect)) < 1e-12
