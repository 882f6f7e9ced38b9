"""Core tensor ops: forward values against independent oracles, backward
against finite differences, and the algebraic invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybriddepth.errors import ContractError, DimensionError
from hybriddepth.numerics import (Tensor, concat, conv2d, gelu, grad_check,
                                  layer_norm, maximum, minimum, no_grad,
                                  softmax, upsample2x_bilinear, where)


def rand(shape, seed=0, lo=-2.0, hi=2.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=shape)


class TestMatmul:
    def test_identity(self):
        b = Tensor(rand((3, 3), 1))
        out = Tensor(np.eye(3)) @ b
        np.testing.assert_array_equal(out.data, b.data)

    def test_hand_product(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_zero_annihilates(self):
        b = Tensor(rand((2, 2), 2))
        out = Tensor(np.zeros((2, 2))) @ b
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_shape_mismatch_names_both(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            Tensor(rand((2, 3))) @ Tensor(rand((2, 3)))

    def test_associativity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b, c = (Tensor(rng.uniform(-1, 1, (4, 4))) for _ in range(3))
            left = ((a @ b) @ c).data
            right = (a @ (b @ c)).data
            assert np.max(np.abs(left - right)) < 1e-9


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([0.0, 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_exp_normalize_oracle(self):
        x = np.array([1.0, 2.0, 3.0])
        expected = np.exp(x) / np.exp(x).sum()
        out = softmax(Tensor(x), axis=0)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)
        np.testing.assert_allclose(out.data, [0.09003, 0.24473, 0.66524], atol=1e-4)

    def test_no_overflow(self):
        out = softmax(Tensor([1000.0, 0.0]), axis=0)
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(1.0)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, seed, n, m):
        x = Tensor(np.random.default_rng(seed).uniform(-50, 50, (n, m)))
        out = softmax(x, axis=-1).data
        assert np.all(out > 0) and np.all(out < 1 + 1e-12)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        ones = Tensor(np.full((2, 4), 3.7))
        out = layer_norm(ones, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_two_point_row(self):
        out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14)
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-6)

    def test_zero_gain_yields_bias(self):
        bias = Tensor(np.array([1.0, -2.0, 0.5]))
        out = layer_norm(Tensor(rand((4, 3), 5)), Tensor(np.zeros(3)), bias)
        np.testing.assert_array_equal(out.data, np.broadcast_to(bias.data, (4, 3)))

    def test_normalized_moments(self):
        x = Tensor(rand((8, 16), 6))
        out = layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-12)
        mu = out.data.mean(axis=-1)
        var = out.data.var(axis=-1)
        assert np.max(np.abs(mu)) < 1e-9
        assert np.max(np.abs(var - 1.0)) < 1e-6


class TestGelu:
    def test_zero(self):
        assert gelu(Tensor([0.0])).data[0] == 0.0

    def test_saturation(self):
        assert gelu(Tensor([10.0])).data[0] == pytest.approx(10.0, abs=1e-9)

    def test_erf_oracle_at_one(self):
        expected = 1.0 * 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
        assert gelu(Tensor([1.0])).data[0] == pytest.approx(expected, abs=1e-12)
        assert gelu(Tensor([1.0])).data[0] == pytest.approx(0.84134, abs=1e-4)

    def test_monotone_on_grid(self):
        # x * Phi(x) is increasing right of its single minimum near -0.7518
        x = np.linspace(-0.7, 6, 201)
        out = gelu(Tensor(x)).data
        assert np.all(np.diff(out) > 0)


class TestConv2d:
    def test_1x1_identity(self):
        x = Tensor(rand((1, 4, 4), 7))
        w = Tensor(np.ones((1, 1, 1, 1)))
        out = conv2d(x, w, Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_ones_kernel_hand_sum(self):
        x = Tensor(np.ones((1, 3, 3)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        out = conv2d(x, w, None, stride=1, pad=0)
        assert out.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 9.0

    def test_bias_only(self):
        x = Tensor(rand((2, 5, 5), 8))
        w = Tensor(np.zeros((3, 2, 3, 3)))
        out = conv2d(x, w, Tensor(np.array([1.0, -1.0, 2.5])), pad=1)
        for co, b in enumerate([1.0, -1.0, 2.5]):
            np.testing.assert_array_equal(out.data[co], np.full((5, 5), b))

    def test_output_size_formula(self):
        x = Tensor(rand((1, 11, 9), 9))
        w = Tensor(rand((2, 1, 3, 3), 10))
        out = conv2d(x, w, None, stride=2, pad=1)
        assert out.shape == (2, (11 + 2 - 3) // 2 + 1, (9 + 2 - 3) // 2 + 1)

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError, match="larger than padded"):
            conv2d(Tensor(rand((1, 2, 2))), Tensor(rand((1, 1, 5, 5))), None)

    def test_matches_direct_loop(self):
        x = Tensor(rand((2, 6, 5), 11))
        w = Tensor(rand((3, 2, 3, 3), 12))
        b = Tensor(rand((3,), 13))
        out = conv2d(x, w, b, stride=2, pad=1).data
        padded = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
        for co in range(3):
            for i in range(out.shape[1]):
                for j in range(out.shape[2]):
                    patch = padded[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                    want = (patch * w.data[co]).sum() + b.data[co]
                    assert out[co, i, j] == pytest.approx(want, abs=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(rand((3, 4), 14), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_quadratic(self):
        x = Tensor(rand((5,), 15), requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, 2 * x.data, atol=1e-12)

    def test_fanout_sums_contributions(self):
        x = Tensor(rand((4,), 16), requires_grad=True)
        y = x * 3.0
        loss = (y + x * x).sum()
        loss.backward()
        np.testing.assert_allclose(x.grad, 3.0 + 2 * x.data, atol=1e-12)

    def test_accumulates_across_rounds(self):
        x = Tensor(rand((3,), 17), requires_grad=True)
        x.sum().backward()
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, 2 * np.ones(3))
        x.zero_grad()
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones(3))

    def test_non_scalar_loss_rejected(self):
        x = Tensor(rand((3,), 18), requires_grad=True)
        with pytest.raises(ContractError, match="scalar"):
            (x * 2.0).backward()

    def test_each_node_visited_once(self):
        x = Tensor(rand((3,), 19), requires_grad=True)
        y = x * 2.0
        calls = {"n": 0}
        orig = y._backward

        def counting(g):
            calls["n"] += 1
            return orig(g)

        y._backward = counting
        # diamond: y feeds two consumers
        (y.sum() + (y * y).sum()).backward()
        assert calls["n"] == 1

    def test_no_grad_suppresses_recording(self):
        x = Tensor(rand((3,), 20), requires_grad=True)
        with no_grad():
            y = (x * x).sum()
        assert y._parents == () and not y.requires_grad

    def test_composite_matches_finite_differences(self):
        def f(x):
            return (softmax(x, axis=-1) ** 2).sum()

        report = grad_check(f, Tensor(rand((3, 5), 21)), tol=1e-4)
        assert report.passed, str(report)


class TestShapeOps:
    def test_getitem_scatters_gradient(self):
        x = Tensor(rand((4, 3), 22), requires_grad=True)
        x[1:].sum().backward()
        expected = np.ones((4, 3))
        expected[0] = 0
        np.testing.assert_array_equal(x.grad, expected)

    def test_fancy_index_duplicates_accumulate(self):
        x = Tensor(rand((3,), 23), requires_grad=True)
        idx = np.array([0, 0, 2])
        x[idx].sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])

    def test_concat_roundtrip_grads(self):
        a = Tensor(rand((2, 3), 24), requires_grad=True)
        b = Tensor(rand((4, 3), 25), requires_grad=True)
        out = concat([a, b], axis=0)
        (out * out).sum().backward()
        np.testing.assert_allclose(a.grad, 2 * a.data)
        np.testing.assert_allclose(b.grad, 2 * b.data)

    def test_transpose_reshape_grad(self):
        def f(x):
            return (x.transpose(1, 0).reshape(6) ** 3).sum()

        assert grad_check(f, Tensor(rand((2, 3), 26))).passed

    def test_where_and_extrema(self):
        a = Tensor(np.array([1.0, 5.0, 2.0]), requires_grad=True)
        b = Tensor(np.array([3.0, 4.0, 2.0]), requires_grad=True)
        maximum(a, b).sum().backward()
        np.testing.assert_array_equal(a.grad, [0.0, 1.0, 1.0])  # tie -> first arg
        np.testing.assert_array_equal(b.grad, [1.0, 0.0, 0.0])
        a.zero_grad(); b.zero_grad()
        minimum(a, b).sum().backward()
        np.testing.assert_array_equal(a.grad, [1.0, 0.0, 1.0])

    def test_where_selects(self):
        cond = np.array([True, False, True])
        out = where(cond, Tensor([1.0, 1.0, 1.0]), Tensor([9.0, 9.0, 9.0]))
        np.testing.assert_array_equal(out.data, [1.0, 9.0, 1.0])


class TestUpsample:
    def test_shape_doubles(self):
        out = upsample2x_bilinear(Tensor(rand((3, 4, 5), 27)))
        assert out.shape == (3, 8, 10)

    def test_constant_preserved(self):
        out = upsample2x_bilinear(Tensor(np.full((1, 3, 3), 2.5)))
        np.testing.assert_allclose(out.data, 2.5, atol=1e-12)

    def test_gradient(self):
        def f(x):
            return (upsample2x_bilinear(x) ** 2).sum()

        assert grad_check(f, Tensor(rand((2, 3, 3), 28))).passed


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_primitive_grads_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-2, 2, (3, 4)))
    y = Tensor(rng.uniform(0.5, 2, (3, 4)))

    def f(x, y):
        z = (x * y + x / y - y).tanh()
        return (z.exp() * z.sigmoid()).mean() + (y.log() + y.sqrt()).sum()

    assert grad_check(f, [x, y], tol=1e-4).passed
