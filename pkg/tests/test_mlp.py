"""Tests for the MLP engine: forward, backward, init, optimizer, weights IO."""

import numpy as np
import pytest

from hyperdyn.mlp import (
    AdamState,
    MlpParams,
    MlpSpec,
    flatten_arrays,
    init_params,
    load_params_text,
    mlp_forward,
    mlp_gradient,
    optimizer_step,
    save_params_text,
    zero_params,
)

from oracles import central_difference_grads, mlp_forward_chain, relative_error


class TestForward:
    def test_zero_params_output_zero(self):
        params = zero_params(MlpSpec(arity=3, hidden=(8,)))
        assert mlp_forward(params, [1.0, -2.0, 0.5]) == 0.0

    def test_identity_single_layer(self):
        spec = MlpSpec(arity=1, hidden=(), activation="linear")
        params = MlpParams(spec, [np.array([[1.0]])], [np.array([0.0])])
        for x in (-2.0, 0.0, 1.7):
            assert mlp_forward(params, [x]) == pytest.approx(x)

    def test_matches_matrix_chain_oracle(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            arity = int(rng.integers(1, 5))
            hidden = tuple(rng.integers(1, 9, size=rng.integers(0, 3)))
            spec = MlpSpec(arity=arity, hidden=hidden)
            params = init_params(spec, seed)
            x = rng.normal(size=arity)
            assert mlp_forward(params, x) == pytest.approx(
                mlp_forward_chain(params, x), abs=1e-14
            )

    def test_batch_agrees_with_scalar(self):
        params = init_params(MlpSpec(arity=2), 3)
        rng = np.random.default_rng(1)
        batch = rng.normal(size=(7, 2))
        outs = mlp_forward(params, batch)
        for row, out in zip(batch, outs):
            assert mlp_forward(params, row) == pytest.approx(out)

    def test_arity_mismatch(self):
        params = init_params(MlpSpec(arity=2), 0)
        with pytest.raises(ValueError, match="arity"):
            mlp_forward(params, [1.0, 2.0, 3.0])

    def test_repeat_evaluation_bit_identical(self):
        params = init_params(MlpSpec(arity=3), 9)
        x = np.array([0.3, -0.7, 1.1])
        assert mlp_forward(params, x) == mlp_forward(params, x)


class TestGradient:
    def test_linear_net_closed_form(self):
        spec = MlpSpec(arity=1, hidden=(), activation="linear")
        params = MlpParams(spec, [np.array([[2.0]])], [np.array([0.5])])
        grads, _ = mlp_gradient(params, [3.0], 1.0)
        assert grads.weights[0][0, 0] == pytest.approx(3.0)
        assert grads.biases[0][0] == pytest.approx(1.0)

    def test_zero_upstream_zero_grads(self):
        params = init_params(MlpSpec(arity=2), 4)
        grads, input_grad = mlp_gradient(params, [0.1, 0.2], 0.0)
        assert all(np.all(g == 0) for g in grads.arrays())
        assert np.all(input_grad == 0)

    def test_matches_central_differences(self):
        rng = np.random.default_rng(12)
        for case in range(20):
            arity = int(rng.integers(1, 5))
            hidden = tuple(rng.integers(1, 7, size=rng.integers(0, 3)))
            spec = MlpSpec(arity=arity, hidden=hidden)
            params = init_params(spec, 100 + case)
            x = rng.normal(size=arity)
            upstream = float(rng.normal())
            grads, _ = mlp_gradient(params, x, upstream)
            fd = central_difference_grads(
                lambda: upstream * mlp_forward(params, x), params.arrays(), step=1e-5
            )
            for got, expect in zip(grads.arrays(), fd):
                for a, b in zip(got.ravel(), expect.ravel()):
                    if max(abs(a), abs(b)) > 1e-6:
                        assert relative_error(a, b) < 1e-4
                    else:
                        assert abs(a - b) < 1e-9

    def test_input_gradient_matches_differences(self):
        params = init_params(MlpSpec(arity=3), 8)
        x = np.array([0.2, -0.4, 0.9])
        _, input_grad = mlp_gradient(params, x, 1.0)
        step = 1e-6
        for i in range(3):
            bumped = x.copy()
            bumped[i] += step
            dropped = x.copy()
            dropped[i] -= step
            fd = (mlp_forward(params, bumped) - mlp_forward(params, dropped)) / (2 * step)
            assert relative_error(input_grad[i], fd) < 1e-4

    def test_batch_grads_sum_over_rows(self):
        params = init_params(MlpSpec(arity=2, hidden=(5,)), 2)
        rows = np.array([[0.1, 0.2], [0.3, -0.1], [0.0, 1.0]])
        ups = np.array([1.0, -2.0, 0.5])
        batch_grads, _ = mlp_gradient(params, rows, ups)
        acc = [np.zeros_like(a) for a in params.arrays()]
        for row, up in zip(rows, ups):
            g, _ = mlp_gradient(params, row, up)
            for slot, arr in zip(acc, g.arrays()):
                slot += arr
        for got, expect in zip(batch_grads.arrays(), acc):
            assert np.allclose(got, expect, atol=1e-12)


class TestInit:
    def test_seed_determinism(self):
        spec = MlpSpec(arity=2)
        a, b = init_params(spec, 7), init_params(spec, 7)
        c = init_params(spec, 8)
        assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
        assert any(not np.array_equal(x, y) for x, y in zip(a.arrays(), c.arrays()))

    def test_biases_zero(self):
        params = init_params(MlpSpec(arity=3), 1)
        assert all(np.all(b == 0) for b in params.biases)

    def test_weight_variance_scaling(self):
        # variance of U[-1/sqrt(f), 1/sqrt(f)] is 1/(3 f); check within 5%
        spec = MlpSpec(arity=4, hidden=(100, 250))
        draws = np.concatenate(
            [init_params(spec, s).weights[1].ravel() for s in range(5)]
        )
        assert draws.size >= 1e5
        expect = 1.0 / (3.0 * 100)
        assert abs(draws.var() - expect) / expect < 0.05


class TestOptimizer:
    def test_zero_gradient_keeps_params(self):
        params = init_params(MlpSpec(arity=2), 3)
        arrays = params.arrays()
        before = [a.copy() for a in arrays]
        state = AdamState(lr=0.1)
        optimizer_step(state, arrays, [np.zeros_like(a) for a in arrays])
        assert all(np.array_equal(a, b) for a, b in zip(arrays, before))

    def test_scalar_quadratic_converges(self):
        theta = [np.array([0.0])]
        state = AdamState(lr=0.01)
        for _ in range(2000):
            grad = [2.0 * (theta[0] - 3.0)]
            optimizer_step(state, theta, grad)
        assert abs(theta[0][0] - 3.0) < 1e-3

    def test_sign_flip_symmetry(self):
        pos = [np.array([0.0])]
        neg = [np.array([0.0])]
        s1, s2 = AdamState(lr=0.01), AdamState(lr=0.01)
        for _ in range(500):
            optimizer_step(s1, pos, [2.0 * (pos[0] - 1.5)])
            optimizer_step(s2, neg, [2.0 * (neg[0] + 1.5)])
        assert pos[0][0] == pytest.approx(-neg[0][0], abs=1e-12)


class TestSerialization:
    def test_round_trip_exact(self):
        params = init_params(MlpSpec(arity=3, hidden=(4, 2), activation="relu"), 11)
        # exercise non-trivial biases too
        for b in params.biases:
            b += np.random.default_rng(0).normal(size=b.shape)
        text = save_params_text(params)
        loaded = load_params_text(text)
        assert loaded.spec == params.spec
        assert all(np.array_equal(a, b) for a, b in zip(loaded.arrays(), params.arrays()))

    def test_no_hidden_layers(self):
        params = init_params(MlpSpec(arity=2, hidden=(), activation="linear"), 5)
        loaded = load_params_text(save_params_text(params))
        assert loaded.spec.hidden == ()
        assert np.array_equal(loaded.weights[0], params.weights[0])

    def test_flatten_norm_finite(self):
        params = init_params(MlpSpec(arity=2), 0)
        theta = flatten_arrays(params.arrays())
        assert np.isfinite(np.linalg.norm(theta))
