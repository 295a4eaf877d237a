import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfed.errors import (
    CheckFailedError,
    DegenerateInputError,
    InvalidInputError,
)
from maskfed.numerics import (
    cosine_similarity,
    entropy,
    grad_check,
    softmax,
    stream,
)

finite_logits = st.lists(
    st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=1, max_size=8
).map(np.array)


class TestSoftmax:
    def test_symmetric_logits_give_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(3), 1.0), np.ones(3) / 3, atol=1e-15)

    def test_single_entry_normalizes_to_one(self):
        assert softmax(np.array([3.7]), 0.5).tolist() == [1.0]

    def test_log_integers_normalize_to_ratio(self):
        # exp(ln k) = k, so the result is k / sum(k)
        p = softmax(np.log(np.array([1.0, 2.0, 3.0])), 1.0)
        np.testing.assert_allclose(p, np.array([1, 2, 3]) / 6, atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            softmax(np.array([1.0, np.inf]), 1.0)

    def test_rejects_bad_temperature(self):
        with pytest.raises(InvalidInputError):
            softmax(np.array([1.0]), 0.0)

    @given(finite_logits, st.floats(min_value=1e-2, max_value=1e6))
    @settings(max_examples=60)
    def test_output_is_distribution(self, logits, temp):
        p = softmax(logits, temp)
        assert np.all(p >= 0) and np.all(p <= 1)
        assert abs(p.sum() - 1.0) < 1e-9

    @given(finite_logits, st.floats(min_value=-50, max_value=50))
    @settings(max_examples=60)
    def test_shift_invariance(self, logits, shift):
        a = softmax(logits, 1.0)
        b = softmax(logits + shift, 1.0)
        assert np.max(np.abs(a - b)) < 1e-12


class TestCosine:
    def test_identical_vectors(self):
        assert cosine_similarity(np.array([1.0, 2, 3]), np.array([1.0, 2, 3])) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        assert cosine_similarity(np.array([1.0, 0]), np.array([0.0, 1])) == pytest.approx(0.0, abs=1e-15)

    def test_forty_five_degrees(self):
        got = cosine_similarity(np.array([1.0, 1]), np.array([1.0, 0]))
        assert got == pytest.approx(0.7071067812, abs=1e-9)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity(np.zeros(3), np.ones(3))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            cosine_similarity(np.ones(3), np.ones(4))


class TestEntropy:
    def test_deterministic_distribution(self):
        assert entropy(np.array([1.0, 0, 0])) == 0.0

    def test_uniform_binary(self):
        assert entropy(np.array([0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-15)

    def test_uniform_quaternary(self):
        assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-15)

    @given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=50)
    def test_bounds(self, n, seed):
        p = stream(seed, "entropy-test").dirichlet(np.ones(n))
        h = entropy(p)
        assert -1e-12 <= h <= math.log(n) + 1e-9


class TestGradCheck:
    def test_quadratic_is_exact(self):
        def f(theta):
            return float(theta @ theta), 2 * theta

        assert grad_check(f, np.array([1.0, 2.0]), 1e-5) < 1e-8

    def test_wrong_gradient_is_caught(self):
        def f(theta):
            return float(theta @ theta), 2 * theta + 0.01

        assert grad_check(f, np.array([1.0, 2.0]), 1e-5) > 1e-3

    def test_non_finite_objective_reports_index(self):
        def f(theta):
            if theta[1] > 1.0:
                return float("nan"), np.zeros(2)
            return 0.0, np.zeros(2)

        with pytest.raises(CheckFailedError, match="index 1"):
            grad_check(f, np.array([0.0, 1.0]), 1e-1)


class TestStreams:
    def test_same_key_same_draws(self):
        a = stream(0, "x").standard_normal(5)
        b = stream(0, "x").standard_normal(5)
        assert np.array_equal(a, b)

    def test_different_names_decorrelate(self):
        a = stream(0, "x").standard_normal(5)
        b = stream(0, "y").standard_normal(5)
        assert not np.array_equal(a, b)
