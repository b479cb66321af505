"""Exhaustive ground truth for small instances.

Enumerates every ordered K_eff-subset of the items, so the expected metric
and its gradient are exact sums rather than sample means. Only meant for
tests and ``gradcheck``.
"""

import itertools
import math

import numpy as np

from .core import MetricWeights, OracleSizeError, as_gradient, as_scores, effective_cutoff
from .metrics import metric_value
from .sampling import ranking_log_probability

MAX_SEQUENCES = 10**6


def permutation_count(n_items, cutoff):
    k = effective_cutoff(n_items, cutoff)
    return math.perm(n_items, k)


def enumerate_rankings(n_items, cutoff):
    """All D!/(D-K_eff)! ordered sequences, lexicographic."""
    count = permutation_count(n_items, cutoff)
    if count > MAX_SEQUENCES:
        raise OracleSizeError('%d items at cutoff %d give %d rankings (limit %d)'
                              % (n_items, cutoff, count, MAX_SEQUENCES))
    k = effective_cutoff(n_items, cutoff)
    return [list(p) for p in itertools.permutations(range(n_items), k)]


def _weights(theta):
    return theta.weights if isinstance(theta, MetricWeights) else np.asarray(theta, float)


def ranking_distribution(scores, cutoff):
    """(rankings, probabilities) over all top-K_eff sequences."""
    scores = as_scores(scores)
    rankings = enumerate_rankings(scores.size, cutoff)
    probs = np.array([math.exp(ranking_log_probability(scores, y)) for y in rankings])
    return rankings, probs


def exact_expected_metric(scores, rho, theta):
    weights = _weights(theta)
    rankings, probs = ranking_distribution(scores, weights.size)
    values = [metric_value(y, rho, weights) for y in rankings]
    return math.fsum(p * v for p, v in zip(probs, values))


def _policy_gradient_terms(scores, rho, weights, ranking):
    """The bracketed per-ranking expression, one scalar at a time."""
    n_items = len(scores)
    k = len(ranking)
    rank = {d: i + 1 for i, d in enumerate(ranking)}
    tail = [0.0] * (k + 2)
    for i in range(k, 0, -1):
        tail[i] = tail[i + 1] + weights[i - 1] * rho[ranking[i - 1]]
    # (shift, denominator) of the softmax over items unplaced before rank j
    softmax = []
    for j in range(1, k + 1):
        remaining = [x for x in range(n_items) if x not in ranking[:j - 1]]
        top = max(scores[x] for x in remaining)
        softmax.append((top, sum(math.exp(scores[x] - top) for x in remaining)))
    terms = np.zeros(n_items)
    for d in range(n_items):
        r = rank.get(d, k + 1)
        value = tail[r + 1] if r <= k else 0.0
        for j in range(1, min(r, k) + 1):
            top, denom = softmax[j - 1]
            prob = math.exp(scores[d] - top) / denom
            value += prob * (weights[j - 1] * rho[d] - tail[j])
        terms[d] = value
    return terms


def exact_gradient(scores, rho, theta):
    """dR/df(d) as the exact expectation of the per-ranking gradient terms."""
    scores = as_scores(scores)
    rho = np.asarray(rho, dtype=np.float64)
    weights = _weights(theta)
    k = effective_cutoff(scores.size, weights.size)
    rankings, probs = ranking_distribution(scores, k)
    grad = np.zeros(scores.size)
    for y, p in zip(rankings, probs):
        grad += p * _policy_gradient_terms(scores, rho, weights[:k], y)
    return as_gradient(grad)


def score_function_gradient(scores, rho, theta):
    """dR/df via sum_y metric(y) * pi(y) * d log pi(y) / df, enumerated.

    A second exact route that never uses the per-rank decomposition.
    """
    scores = as_scores(scores)
    weights = _weights(theta)
    rankings, probs = ranking_distribution(scores, weights.size)
    grad = np.zeros(scores.size)
    for y, p in zip(rankings, probs):
        dlogp = np.zeros(scores.size)
        remaining = np.ones(scores.size, dtype=bool)
        for d in y:
            soft = np.where(remaining, np.exp(scores - scores[remaining].max()), 0.0)
            dlogp[d] += 1.0
            dlogp -= soft / soft.sum()
            remaining[d] = False
        grad += p * metric_value(y, rho, weights) * dlogp
    return as_gradient(grad)


def finite_difference_gradient(scores, rho, theta, step=1e-5):
    """Central differences of exact_expected_metric."""
    scores = as_scores(scores)
    grad = np.zeros(scores.size)
    for d in range(scores.size):
        up = scores.copy()
        down = scores.copy()
        up[d] += step
        down[d] -= step
        grad[d] = (exact_expected_metric(up, rho, theta)
                   - exact_expected_metric(down, rho, theta)) / (2 * step)
    return grad
