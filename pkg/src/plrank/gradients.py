"""Policy-gradient estimators for the expected ranking metric of a PL model.

``plrank3_*`` computes, per sampled ranking, the placement rewards, risks
and direct rewards in O(K) and then touches each item once, so a sample
costs O(D + K). ``plrank2_*`` is the reference estimator: it evaluates the
bracketed policy-gradient expression with an explicit loop over ranks and a
fresh softmax over the unplaced items at each rank, O(D * K) per sample.

Both return the ascent direction dR/df(d), averaged over the given
rankings. Vectorised over samples; the per-sample work is what the
operation counters account for.
"""

from dataclasses import dataclass

import numpy as np

from .core import (MetricWeights, NumericalError, SampledRanking, as_gradient,
                   as_scores, effective_cutoff, rankings_to_array)

# relative floor below which the subtracted denominator is recomputed
_RENORMALIZE_FLOOR = 1e-12


@dataclass
class OpCounter:
    """Counts elementary per-item / per-rank updates performed by an estimator."""

    count: int = 0

    def add(self, n):
        self.count += int(n)


@dataclass(frozen=True)
class PlRank3Workspace:
    """Accumulators for one sampled ranking of length K = K_eff.

    ``placement_rewards[i]`` is PR_{i+1} (length K+1, last entry 0),
    ``risks[i]`` and ``direct_rewards[i]`` are RI_i and DR_i (length K+1,
    first entry 0), ``denominators[i]`` is S_{i+1} (length K), taken over
    max-shifted exponentials.
    """

    placement_rewards: np.ndarray
    risks: np.ndarray
    direct_rewards: np.ndarray
    denominators: np.ndarray

    @property
    def cutoff(self):
        return self.denominators.size


def _prepare(scores, rho, theta, rankings):
    scores = as_scores(scores)
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != scores.shape:
        raise ValueError('%d relevances for %d scores' % (rho.size, scores.size))
    if not isinstance(theta, MetricWeights):
        theta = MetricWeights(theta)
    cutoff = effective_cutoff(scores.size, theta.cutoff)
    if isinstance(rankings, SampledRanking):
        rankings = [rankings]
    elif isinstance(rankings, np.ndarray) and rankings.ndim == 1:
        rankings = rankings[None, :]
    rankings = rankings_to_array(rankings, scores.size)
    if rankings.shape[1] < cutoff:
        raise ValueError('rankings of length %d, but the cutoff needs %d'
                         % (rankings.shape[1], cutoff))
    return scores, rho, theta.weights[:cutoff], rankings[:, :cutoff]


def _denominators(exp_scores, rankings, query_id):
    """S_k for every sample: initial sum, then subtract each placed item."""
    n, k = rankings.shape
    total = exp_scores.sum()
    placed = exp_scores[rankings]
    steps = np.empty((n, k))
    steps[:, 0] = total
    steps[:, 1:] = placed[:, :-1]
    denom = np.subtract.accumulate(steps, axis=1)
    cancelled = np.flatnonzero((denom < _RENORMALIZE_FLOOR * total).any(axis=1))
    for row in cancelled:
        unplaced = np.ones(exp_scores.size, dtype=bool)
        unplaced[rankings[row]] = False
        rest = exp_scores[unplaced].sum()
        denom[row] = rest + np.cumsum(placed[row, ::-1])[::-1]
    if not np.all(denom > 0.0):
        raise NumericalError('non-positive PL denominator%s'
                             % ('' if query_id is None else ' for query %s' % query_id))
    return denom


def _workspace_arrays(exp_scores, rho, weights, rankings, query_id=None):
    n, k = rankings.shape
    gains = weights[None, :] * rho[rankings]
    pr = np.zeros((n, k + 1))
    pr[:, :k] = np.cumsum(gains[:, ::-1], axis=1)[:, ::-1]
    denom = _denominators(exp_scores, rankings, query_id)
    ri = np.zeros((n, k + 1))
    dr = np.zeros((n, k + 1))
    np.cumsum(pr[:, :k] / denom, axis=1, out=ri[:, 1:])
    np.cumsum(weights[None, :] / denom, axis=1, out=dr[:, 1:])
    return pr, ri, dr, denom


def build_workspace(scores, ranking, rho, theta, query_id=None):
    """PR / RI / DR accumulators and denominators for a single ranking."""
    if not isinstance(ranking, SampledRanking):
        ranking = SampledRanking(ranking, np.size(scores))
    scores, rho, weights, rankings = _prepare(scores, rho, theta, ranking)
    exp_scores = np.exp(scores - scores.max())
    pr, ri, dr, denom = _workspace_arrays(exp_scores, rho, weights, rankings[:1],
                                          query_id)
    return PlRank3Workspace(pr[0], ri[0], dr[0], denom[0])


def plrank3_sample_gradients(scores, rho, theta, rankings, counter=None,
                             query_id=None):
    """Per-sample PL-Rank-3 terms as an (N, D) array; the estimate is its mean."""
    scores, rho, weights, rankings = _prepare(scores, rho, theta, rankings)
    n, k = rankings.shape
    n_items = scores.size
    exp_scores = np.exp(scores - scores.max())
    pr, ri, dr, _ = _workspace_arrays(exp_scores, rho, weights, rankings, query_id)

    # unplaced items all use r = K (and PR_{K+1} = 0) ...
    grads = exp_scores[None, :] * (rho[None, :] * dr[:, k, None] - ri[:, k, None])
    # ... placed items use their own rank r
    rows = np.arange(n)[:, None]
    placed_exp = exp_scores[rankings]
    grads[rows, rankings] = pr[:, 1:] + placed_exp * (rho[rankings] * dr[:, 1:]
                                                      - ri[:, 1:])
    if counter is not None:
        counter.add(n_items + n * (3 * k + n_items))
    return grads


def plrank3_estimate(scores, rho, theta, rankings, counter=None, query_id=None):
    """PL-Rank-3 gradient estimate dR/df(d) from shared sampled rankings."""
    grads = plrank3_sample_gradients(scores, rho, theta, rankings, counter, query_id)
    return as_gradient(grads.mean(axis=0))


def plrank2_sample_gradients(scores, rho, theta, rankings, counter=None,
                             query_id=None):
    """Per-sample PL-Rank-2 terms as an (N, D) array, by a loop over ranks."""
    scores, rho, weights, rankings = _prepare(scores, rho, theta, rankings)
    n, k = rankings.shape
    n_items = scores.size
    rows = np.arange(n)
    gains = weights[None, :] * rho[rankings]
    # tail[:, i] = sum_{x > i} theta_x rho_{y_x} (0-based ranks)
    tail = np.zeros((n, k + 1))
    tail[:, :k] = np.cumsum(gains[:, ::-1], axis=1)[:, ::-1]

    grads = np.zeros((n, n_items))
    # reward collected after each placed item
    grads[rows[:, None], rankings] = tail[:, 1:]
    # softmax over the unplaced items, renormalized from scratch at every rank
    weights_left = np.broadcast_to(np.exp(scores - scores.max()), (n, n_items)).copy()
    for i in range(k):
        denom = weights_left.sum(axis=1, keepdims=True)
        if not np.all(denom > 0.0):
            raise NumericalError('PL softmax underflow at rank %d%s' % (
                i + 1, '' if query_id is None else ' for query %s' % query_id))
        probs = weights_left / denom
        grads += probs * (weights[i] * rho[None, :] - tail[:, i, None])
        weights_left[rows, rankings[:, i]] = 0.0
    if counter is not None:
        counter.add(n * (k * n_items + n_items))
    if not np.all(np.isfinite(grads)):
        raise NumericalError('non-finite PL-Rank-2 gradient%s'
                             % ('' if query_id is None else ' for query %s' % query_id))
    return grads


def plrank2_estimate(scores, rho, theta, rankings, counter=None, query_id=None):
    """PL-Rank-2 gradient estimate dR/df(d) from shared sampled rankings."""
    grads = plrank2_sample_gradients(scores, rho, theta, rankings, counter, query_id)
    return as_gradient(grads.mean(axis=0))


ESTIMATORS = {
    'plrank2': plrank2_estimate,
    'plrank3': plrank3_estimate,
}
