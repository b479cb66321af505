"""Plackett-Luce placement probabilities and Gumbel top-K sampling."""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import SampledRanking, as_scores, effective_cutoff

# smallest positive double; keeps -log(-log(u)) finite
_U_FLOOR = np.nextafter(0.0, 1.0)


def _query_key(query_id):
    digest = hashlib.blake2b(str(query_id).encode('utf-8'), digest_size=8)
    return int.from_bytes(digest.digest(), 'little')


@dataclass(frozen=True)
class RngStream:
    """Deterministic substream for (base_seed, query_id, epoch, sample_block).

    The substream only depends on the tuple, never on the order in which
    streams are created, so sampling is reproducible under any schedule.
    """

    seed: int
    query_id: str = ''
    epoch: int = 0
    block: int = 0

    def generator(self):
        seq = np.random.SeedSequence(
            entropy=int(self.seed) % 2**64,
            spawn_key=(_query_key(self.query_id), int(self.epoch), int(self.block)))
        return np.random.Generator(np.random.PCG64(seq))


def placement_probability(scores, prefix, item):
    """Probability that ``item`` is placed next after the items in ``prefix``."""
    scores = as_scores(scores)
    n_items = scores.size
    placed = np.zeros(n_items, dtype=bool)
    prefix = np.asarray(prefix, dtype=np.int64).reshape(-1)
    if prefix.size:
        if prefix.min() < 0 or prefix.max() >= n_items:
            raise ValueError('prefix item out of range')
        if np.unique(prefix).size != prefix.size:
            raise ValueError('prefix contains duplicate items')
        placed[prefix] = True
    if not 0 <= item < n_items:
        raise ValueError('item %r out of range [0, %d)' % (item, n_items))
    if placed.all():
        raise ValueError('prefix already places every item; '
                         'no placement probability is defined')
    if placed[item]:
        return 0.0
    remaining = scores[~placed]
    shift = remaining.max()
    weights = np.exp(remaining - shift)
    return float(np.exp(scores[item] - shift) / weights.sum())


def ranking_log_probability(scores, ranking):
    """Log-probability of a (possibly partial) ranking under the PL model."""
    scores = as_scores(scores)
    if not isinstance(ranking, SampledRanking):
        ranking = SampledRanking(ranking, scores.size)
    if ranking.n_items != scores.size:
        raise ValueError('ranking over %d items, %d scores'
                         % (ranking.n_items, scores.size))
    remaining = np.ones(scores.size, dtype=bool)
    logp = 0.0
    for d in ranking.items:
        logp += scores[d] - logsumexp(scores[remaining])
        remaining[d] = False
    return float(logp)


def gumbel_noise(rng, shape):
    """Standard Gumbel samples as -log(-log(u)), u clamped into (0, 1)."""
    g = rng.random(shape)
    np.maximum(g, _U_FLOOR, out=g)
    np.log(g, out=g)
    np.negative(g, out=g)
    np.log(g, out=g)
    return np.negative(g, out=g)


def top_k_rows(values, k):
    """Indices of the k largest entries of each row, in descending order.

    Uses introselect (``argpartition``) followed by a sort of only the k
    selected entries, i.e. O(D + k log k) per row. Equal values are ordered
    by lower index first, including at the selection boundary.
    """
    values = np.atleast_2d(values)
    n_rows, n_cols = values.shape
    if k >= n_cols:
        chosen = np.broadcast_to(np.arange(n_cols), (n_rows, n_cols))
    else:
        chosen = np.argpartition(-values, k - 1, axis=1)[:, :k]
        kth = np.take_along_axis(values, chosen, axis=1).min(axis=1)
        # a tie straddling the boundary may have let a higher index in
        boundary_ties = np.count_nonzero(values >= kth[:, None], axis=1) > k
        if boundary_ties.any():
            chosen = chosen.copy()
            for row in np.flatnonzero(boundary_ties):
                full = np.lexsort((np.arange(n_cols), -values[row]))
                chosen[row] = full[:k]
    chosen_values = np.take_along_axis(values, chosen, axis=1)
    order = np.lexsort((chosen, -chosen_values), axis=-1)
    return np.take_along_axis(chosen, order, axis=1)


def sample_ranking_matrix(scores, cutoff, n_samples, rng):
    """N Plackett-Luce rankings of length min(K, D) as an (N, K_eff) array.

    ``rng`` is an RngStream or a numpy Generator.
    """
    scores = as_scores(scores)
    if n_samples < 1:
        raise ValueError('n_samples must be >= 1')
    k = effective_cutoff(scores.size, cutoff)
    if isinstance(rng, RngStream):
        rng = rng.generator()
    perturbed = scores[None, :] + gumbel_noise(rng, (n_samples, scores.size))
    return top_k_rows(perturbed, k)


def gumbel_sample_rankings(scores, cutoff, n_samples, rng):
    """N sampled rankings as SampledRanking objects."""
    matrix = sample_ranking_matrix(scores, cutoff, n_samples, rng)
    n_items = np.size(scores)
    return [SampledRanking(row, n_items) for row in matrix]
