import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudseg.errors import DomainError, EmptyBatch, ShapeMismatch
from cloudseg.loss import (
    DEFAULT_EPSILON,
    batch_loss,
    soft_jaccard_gradient,
    soft_jaccard_loss,
    soft_jaccard_loss_torch,
)

EPS = DEFAULT_EPSILON


class TestWorkedExamples:
    def test_perfect_match_is_exactly_minus_one(self):
        t = np.array([1.0, 0.0, 1.0])
        assert soft_jaccard_loss(t, t) == -1.0

    def test_total_miss(self):
        t = np.array([1.0, 1.0, 0.0, 0.0])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        assert soft_jaccard_loss(t, y) == pytest.approx(-EPS / (4 + EPS), rel=1e-9)

    def test_half_confidence(self):
        t = np.array([1.0, 0.0])
        y = np.array([0.5, 0.5])
        expected = -(0.5 + EPS) / (1.5 + EPS)
        assert soft_jaccard_loss(t, y) == pytest.approx(expected, rel=1e-12)

    def test_degenerate_all_zero_is_minus_one(self):
        # epsilon appears in both numerator and denominator, so -eps/eps.
        z = np.zeros(10)
        assert soft_jaccard_loss(z, z) == -1.0


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            soft_jaccard_loss(np.zeros(3), np.zeros(4))

    def test_empty_input(self):
        with pytest.raises(ShapeMismatch):
            soft_jaccard_loss(np.zeros(0), np.zeros(0))

    def test_non_binary_targets(self):
        with pytest.raises(DomainError):
            soft_jaccard_loss(np.array([0.5, 1.0]), np.array([0.5, 1.0]))

    def test_predictions_out_of_range(self):
        with pytest.raises(DomainError):
            soft_jaccard_loss(np.array([1.0, 0.0]), np.array([1.2, 0.0]))

    def test_bad_epsilon(self):
        with pytest.raises(DomainError):
            soft_jaccard_loss(np.ones(2), np.ones(2), epsilon=0.0)


class TestBatchLoss:
    def test_single_pair_equals_plain_loss(self):
        t = np.array([1.0, 0.0, 1.0, 0.0])
        y = np.array([0.9, 0.1, 0.8, 0.2])
        assert batch_loss([(t, y)]) == soft_jaccard_loss(t, y)

    def test_mean_of_two_pairs(self):
        perfect = (np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        third = (np.array([1.0, 0.0]), np.array([0.5, 0.5]))
        expected = (-1.0 + soft_jaccard_loss(*third)) / 2.0
        assert batch_loss([perfect, third]) == pytest.approx(expected, rel=1e-12)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            batch_loss([])


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=128), st.integers(min_value=0, max_value=2**31 - 1))
def test_bounds_property(n, seed):
    r = np.random.default_rng(seed)
    t = (r.random(n) > 0.5).astype(float)
    y = r.random(n)
    value = soft_jaccard_loss(t, y)
    assert -1.0 <= value < 0.0


def test_minus_one_iff_pointwise_equal(rng):
    t = (rng.random(50) > 0.5).astype(float)
    assert soft_jaccard_loss(t, t) == -1.0
    y = t.copy()
    y[t.argmax()] = 0.75
    assert soft_jaccard_loss(t, y) > -1.0


def test_monotone_improvement_along_interpolation(rng):
    # Moving y pointwise toward t never increases the loss.
    for _ in range(20):
        n = int(rng.integers(2, 100))
        t = (rng.random(n) > 0.4).astype(float)
        if t.sum() == 0:
            t[0] = 1.0
        y = rng.random(n)
        alphas = np.linspace(0.0, 1.0, 11)
        losses = [soft_jaccard_loss(t, (1 - a) * y + a * t) for a in alphas]
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)


def test_permutation_invariance(rng):
    n = 64
    t = (rng.random(n) > 0.5).astype(float)
    y = rng.random(n)
    perm = rng.permutation(n)
    assert soft_jaccard_loss(t[perm], y[perm]) == pytest.approx(
        soft_jaccard_loss(t, y), rel=1e-14)


def test_gradient_matches_finite_differences(rng):
    h = 1e-5
    for _ in range(25):
        n = int(rng.integers(1, 257))
        t = (rng.random(n) > 0.5).astype(float)
        y = rng.uniform(0.05, 0.95, n)
        grad = soft_jaccard_gradient(t, y)
        idx = rng.choice(n, size=min(n, 8), replace=False)
        for i in idx:
            up = y.copy(); up[i] += h
            down = y.copy(); down[i] -= h
            fd = (soft_jaccard_loss(t, up) - soft_jaccard_loss(t, down)) / (2 * h)
            denom = max(abs(fd), abs(grad[i]), 1e-12)
            assert abs(fd - grad[i]) / denom < 1e-4


def test_torch_loss_matches_numpy(rng):
    t = (rng.random((3, 1, 8, 8)) > 0.5).astype(np.float32)
    y = rng.uniform(0.01, 0.99, (3, 1, 8, 8)).astype(np.float32)
    got = soft_jaccard_loss_torch(torch.from_numpy(t), torch.from_numpy(y)).item()
    want = np.mean([soft_jaccard_loss(t[i].ravel().astype(float),
                                      y[i].ravel().astype(float)) for i in range(3)])
    assert got == pytest.approx(want, rel=1e-6)


def test_torch_loss_backward_matches_analytic(rng):
    t_np = (rng.random((1, 1, 6, 6)) > 0.5).astype(np.float64)
    y_np = rng.uniform(0.05, 0.95, (1, 1, 6, 6))
    y = torch.from_numpy(y_np).requires_grad_(True)
    loss = soft_jaccard_loss_torch(torch.from_numpy(t_np), y)
    loss.backward()
    want = soft_jaccard_gradient(t_np.ravel(), y_np.ravel()).reshape(y_np.shape)
    np.testing.assert_allclose(y.grad.numpy(), want, rtol=1e-10, atol=1e-12)
