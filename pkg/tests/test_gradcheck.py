import numpy as np
import pytest

from hybriddepth.errors import ContractError
from hybriddepth.numerics import Tensor, grad_check, scale_with_wrong_grad, softmax


def test_softmax_sum_of_squares_passes():
    x = Tensor(np.random.default_rng(0).uniform(-2, 2, (4, 6)))
    report = grad_check(lambda t: (softmax(t, axis=-1) ** 2).sum(), x, tol=1e-4)
    assert report.passed, str(report)


def test_matmul_chain_passes():
    rng = np.random.default_rng(1)
    a = Tensor(rng.uniform(-2, 2, (3, 4)))
    b = Tensor(rng.uniform(-2, 2, (4, 5)))

    def f(a, b):
        return ((a @ b).tanh() @ b.T).sum()

    report = grad_check(f, [a, b], tol=1e-4)
    assert report.passed


def test_corrupted_gradient_fails():
    x = Tensor(np.random.default_rng(2).uniform(-2, 2, (5,)))
    report = grad_check(lambda t: scale_with_wrong_grad(t).sum(), x, tol=1e-4)
    assert not report.passed
    assert report.rel_error > 1e-3


def test_subset_sampling_caps_work():
    x = Tensor(np.random.default_rng(3).uniform(-2, 2, (10, 10)))
    report = grad_check(lambda t: (t * t).sum(), x, max_coords_per_input=7)
    assert report.checked == 7
    assert report.passed


def test_rejects_non_scalar_target():
    with pytest.raises(ContractError, match="scalar"):
        grad_check(lambda t: t * 2.0, Tensor(np.ones(3)))


def test_rejects_bad_step():
    with pytest.raises(ContractError, match="h > 0"):
        grad_check(lambda t: t.sum(), Tensor(np.ones(3)), h=0.0)


def test_report_string_mentions_verdict():
    x = Tensor(np.ones(2))
    report = grad_check(lambda t: (t ** 2).sum(), x)
    assert "pass" in str(report)
