import math

import numpy as np
import pytest

from plrank.core import OracleSizeError
from plrank.metrics import dcg_weights, precision_weights
from plrank.oracle import (enumerate_rankings, exact_expected_metric, exact_gradient,
                           finite_difference_gradient, ranking_distribution,
                           score_function_gradient)


def test_enumerate_rankings():
    assert len(enumerate_rankings(3, 2)) == 6
    assert enumerate_rankings(2, 2) == [[0, 1], [1, 0]]
    assert enumerate_rankings(4, 1) == [[0], [1], [2], [3]]
    assert enumerate_rankings(3, 9) == enumerate_rankings(3, 3)


def test_enumeration_cap():
    with pytest.raises(OracleSizeError, match='3628800'):
        enumerate_rankings(10, 10)
    assert len(enumerate_rankings(9, 6)) == 60480


@pytest.mark.parametrize('scores,rho,theta,expected', [
    ([0, 0], [1, 0], precision_weights(1), 0.5),
    ([0, 0], [1, 1], dcg_weights(2), 1 + 1 / math.log2(3)),
    ([math.log(3), 0], [1, 0], precision_weights(1), 0.75),
])
def test_exact_expected_metric(scores, rho, theta, expected):
    assert exact_expected_metric(scores, rho, theta) == pytest.approx(expected, abs=1e-12)


def test_coin_gradient():
    # d/df0 of e^f0 / (e^f0 + e^f1) at f = 0 is 1/4
    grad = exact_gradient([0.0, 0.0], [1.0, 0.0], precision_weights(1))
    np.testing.assert_allclose(grad, [0.25, -0.25], atol=1e-12)
    fd = finite_difference_gradient([0.0, 0.0], [1.0, 0.0], precision_weights(1))
    np.testing.assert_allclose(fd, [0.25, -0.25], atol=1e-9)


def test_single_item_gradient():
    assert exact_gradient([1.3], [2.0], dcg_weights(1)).tolist() == [0.0]


@pytest.mark.parametrize('seed', range(5))
def test_constant_relevance_full_precision_has_zero_gradient(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    grad = exact_gradient(rng.standard_normal(n), np.full(n, 2.0), precision_weights(n))
    assert np.all(np.abs(grad) <= 1e-10)


def oracle_instances():
    rng = np.random.default_rng(1234)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        k = int(rng.integers(1, n + 1))
        theta = dcg_weights(k) if rng.random() < 0.5 else precision_weights(k)
        yield rng.standard_normal(n) * 1.5, rng.integers(0, 5, n).astype(float), theta


@pytest.mark.parametrize('scores,rho,theta', list(oracle_instances()))
def test_oracle_self_consistency(scores, rho, theta):
    _, probs = ranking_distribution(scores, theta.cutoff)
    assert abs(probs.sum() - 1.0) <= 1e-10
    exact = exact_gradient(scores, rho, theta)
    assert np.max(np.abs(exact - finite_difference_gradient(scores, rho, theta))) <= 1e-5
    assert abs(exact.sum()) <= 1e-8
    np.testing.assert_allclose(exact, score_function_gradient(scores, rho, theta),
                               atol=1e-12)
