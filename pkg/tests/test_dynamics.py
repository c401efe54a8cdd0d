"""Tests for the analytical update families and the Euler integrator."""

import numpy as np
import pytest

from hyperdyn.dynamics import (
    DivergenceError,
    edge_update,
    evaluate_rhs,
    integrate_euler,
    kernel_eval,
    load_trajectory,
    make_family,
    save_trajectory,
)
from hyperdyn.hypergraph import build_hypergraph, clique_weights, generate_er_hypergraph

from oracles import (
    monolithic_edge_update,
    monolithic_rhs,
    two_node_diffusion_closed_form,
)


def hg(n, edges):
    return build_hypergraph(n, edges)[0]


class TestKernels:
    def test_kuramoto_pairwise(self):
        fam = make_family("kuramoto", 2)
        assert kernel_eval(fam, 0.0, [np.pi / 2], 2) == pytest.approx(1.0)

    def test_si_three_way(self):
        fam = make_family("si", 3)
        assert kernel_eval(fam, 0.5, [1.0, 1.0], 3) == pytest.approx(0.5)

    def test_mcm_all_equal_vanishes(self):
        fam = make_family("mcm", 2)
        assert kernel_eval(fam, 0.5, [0.5], 2) == pytest.approx(0.0)

    def test_diffusion_four_way(self):
        fam = make_family("diffusion", 4)
        assert kernel_eval(fam, 1.0, [0.0, 0.0, 0.0], 4) == pytest.approx(-3.0)

    def test_arity_mismatch_rejected(self):
        fam = make_family("kuramoto", 3)
        with pytest.raises(ValueError, match="neighbor values"):
            kernel_eval(fam, 0.0, [0.1], 3)
        with pytest.raises(ValueError, match="below the kernel order"):
            kernel_eval(fam, 0.0, [0.1, 0.2], 2)

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="valid:"):
            make_family("sir", 2)

    @pytest.mark.parametrize("name", ["kuramoto", "si", "mcm", "diffusion"])
    def test_neighbor_permutation_invariance(self, name):
        rng = np.random.default_rng(7)
        fam = make_family(name, 4)
        for _ in range(20):
            neigh = list(rng.uniform(0.05, 0.95, size=3))
            base = kernel_eval(fam, 0.4, neigh, 4)
            shuffled = list(neigh)
            rng.shuffle(shuffled)
            assert kernel_eval(fam, 0.4, shuffled, 4) == pytest.approx(base, abs=1e-14)

    @pytest.mark.parametrize("name", ["kuramoto", "mcm", "diffusion"])
    def test_all_equal_arguments_give_zero(self, name):
        fam = make_family(name, 3)
        assert kernel_eval(fam, 0.7, [0.7, 0.7], 4) == pytest.approx(0.0)


class TestEdgeUpdate:
    def test_diffusion_pairwise_on_triangle(self):
        fam = make_family("diffusion", 2)
        assert edge_update(fam, [0.0, 1.0, 2.0], 0) == pytest.approx(3.0)

    def test_kuramoto_pairwise(self):
        fam = make_family("kuramoto", 2)
        assert edge_update(fam, [0.0, np.pi / 2, np.pi / 2], 0) == pytest.approx(2.0)

    def test_si_pairwise_on_four_edge_subset_oracle(self):
        rng = np.random.default_rng(11)
        fam = make_family("si", 2)
        for _ in range(50):
            values = rng.uniform(0, 1, size=4)
            center = rng.integers(0, 4)
            expect = monolithic_edge_update("si", 2, values, center)
            assert edge_update(fam, values, center) == pytest.approx(expect, abs=1e-12)

    @pytest.mark.parametrize("name", ["kuramoto", "si", "mcm", "diffusion"])
    @pytest.mark.parametrize("p,d", [(2, 2), (2, 3), (2, 4), (3, 3), (3, 4), (4, 4)])
    def test_subset_sum_matches_monolithic(self, name, p, d):
        rng = np.random.default_rng(p * 10 + d)
        fam = make_family(name, p)
        lo, hi = (0.05, 0.95) if name in ("si", "mcm") else (-np.pi, np.pi)
        for _ in range(100):
            values = rng.uniform(lo, hi, size=d)
            center = int(rng.integers(0, d))
            got = edge_update(fam, values, center)
            expect = monolithic_edge_update(name, p, values, center)
            assert got == pytest.approx(expect, abs=1e-12)

    def test_small_edge_uses_reduced_arity(self):
        # an order-3 family on a 2-edge falls back to the pairwise kernel
        fam3 = make_family("diffusion", 3)
        fam2 = make_family("diffusion", 2)
        assert edge_update(fam3, [0.2, 0.9], 0) == edge_update(fam2, [0.2, 0.9], 0)


class TestEvaluateRhs:
    def test_single_diffusion_edge(self):
        fam = make_family("diffusion", 2)
        out = evaluate_rhs(hg(2, [{0, 1}]), fam, np.array([0.0, 1.0]))
        assert out == pytest.approx([1.0, -1.0])

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_kuramoto_fixed_point_at_sync(self, p):
        h = generate_er_hypergraph(12, {2: 0.2, 3: 0.1, 4: 0.05}, rng_seed=2)
        fam = make_family("kuramoto", p)
        out = evaluate_rhs(h, fam, np.full(12, 0.8))
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_pairwise_kuramoto_equals_clique_expansion(self):
        rng = np.random.default_rng(3)
        h = generate_er_hypergraph(20, {2: 0.1, 3: 0.05, 4: 0.02}, rng_seed=8)
        fam = make_family("kuramoto", 2)
        a = clique_weights(h)
        for _ in range(10):
            x = rng.uniform(-np.pi, np.pi, size=20)
            expect = (a * np.sin(x[None, :] - x[:, None])).sum(axis=1)
            assert np.max(np.abs(evaluate_rhs(h, fam, x) - expect)) < 1e-12

    def test_isolated_nodes_stay_zero(self):
        fam = make_family("si", 2)
        out = evaluate_rhs(hg(5, [{0, 1}]), fam, np.array([0.5, 0.5, 0.9, 0.9, 0.9]))
        assert np.all(out[2:] == 0.0)

    def test_dimension_mismatch(self):
        fam = make_family("diffusion", 2)
        with pytest.raises(ValueError, match="shape"):
            evaluate_rhs(hg(3, [{0, 1}]), fam, np.zeros(4))

    @pytest.mark.parametrize("name", ["kuramoto", "si", "mcm", "diffusion"])
    def test_node_relabeling_equivariance(self, name):
        rng = np.random.default_rng(17)
        h = generate_er_hypergraph(12, {2: 0.15, 3: 0.05, 4: 0.02}, rng_seed=4)
        fam = make_family(name, 3)
        x = rng.uniform(0.05, 0.95, size=12)
        perm = rng.permutation(12)
        relabeled = hg(12, [tuple(perm[i] for i in e) for e in h.all_edges()])
        x_perm = np.empty(12)
        x_perm[perm] = x
        base = evaluate_rhs(h, fam, x)
        moved = evaluate_rhs(relabeled, fam, x_perm)
        assert np.allclose(moved[perm], base, atol=1e-12)

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_diffusion_conserves_total(self, p):
        rng = np.random.default_rng(p)
        fam = make_family("diffusion", p)
        for i in range(25):
            h = generate_er_hypergraph(15, {2: 0.1, 3: 0.05, 4: 0.02}, rng_seed=100 + i)
            x = rng.uniform(-1, 1, size=15)
            assert abs(evaluate_rhs(h, fam, x).sum()) < 1e-10

    @pytest.mark.parametrize("name", ["kuramoto", "si", "mcm", "diffusion"])
    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_matches_monolithic_rhs(self, name, p):
        rng = np.random.default_rng(60)
        h = generate_er_hypergraph(14, {2: 0.1, 3: 0.05, 4: 0.02}, rng_seed=21)
        lo, hi = (0.05, 0.95) if name in ("si", "mcm") else (-np.pi, np.pi)
        x = rng.uniform(lo, hi, size=14)
        fam = make_family(name, p)
        assert np.allclose(evaluate_rhs(h, fam, x), monolithic_rhs(name, p, h, x), atol=1e-12)


class TestIntegrateEuler:
    def test_zero_steps_forbidden(self):
        fam = make_family("diffusion", 2)
        with pytest.raises(ValueError, match="steps"):
            integrate_euler(hg(2, [{0, 1}]), fam, np.zeros(2), 0, 0.01)

    def test_fixed_point_stays(self):
        fam = make_family("kuramoto", 2)
        traj = integrate_euler(hg(2, [{0, 1}]), fam, np.array([0.3, 0.3]), 1, 0.01)
        assert traj.states.shape == (2, 2)
        assert np.allclose(traj.states[1], traj.states[0])

    def test_single_euler_step(self):
        fam = make_family("diffusion", 2)
        traj = integrate_euler(hg(2, [{0, 1}]), fam, np.array([0.0, 1.0]), 1, 0.01)
        assert traj.states[1] == pytest.approx([0.01, 0.99])

    def test_two_node_heat_equation(self):
        fam = make_family("diffusion", 2)
        x0 = np.array([0.0, 1.0])
        traj = integrate_euler(hg(2, [{0, 1}]), fam, x0, 100, 0.01)
        exact = two_node_diffusion_closed_form(x0, 1.0)
        assert np.max(np.abs(traj.states[-1] - exact)) < 0.02

    def test_divergence_reports_step(self):
        fam = make_family("si", 2)
        h = hg(2, [{0, 1}])
        with pytest.raises(DivergenceError) as err:
            integrate_euler(h, fam, np.array([1e300, 1e300]), 5, 1e6)
        assert err.value.step >= 1

    def test_si_states_stay_near_unit_interval(self):
        fam = make_family("si", 3)
        dt = 0.01
        for seed in range(5):
            h = generate_er_hypergraph(20, {2: 0.01, 3: 0.001, 4: 0.001}, rng_seed=seed)
            rng = np.random.default_rng(seed)
            x0 = rng.uniform(0, 1, size=20)
            traj = integrate_euler(h, fam, x0, 100, dt)
            assert traj.states.max() <= 1.0 + 5 * dt
            assert traj.states.min() >= -5 * dt


class TestTrajectoryIO:
    def test_round_trip(self, tmp_path):
        fam = make_family("diffusion", 2)
        traj = integrate_euler(hg(2, [{0, 1}]), fam, np.array([0.0, 1.0]), 10, 0.01)
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path, header={"family": "diffusion", "p": 2, "seed": 1})
        loaded, meta = load_trajectory(path)
        assert meta["family"] == "diffusion"
        assert meta["steps"] == 10
        assert np.array_equal(loaded.states, traj.states)
        assert loaded.dt == traj.dt
