"""Shared domain types, validation helpers and exceptions.

Item indices are 0-based everywhere; rank positions are 1-based so that
rank weight ``theta[k - 1]`` belongs to rank ``k``.
"""

from dataclasses import dataclass, field

import numpy as np


class PlRankError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PlRankError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """A LETOR line could not be parsed.

    Carries the 1-based line number and the 0-based byte offset of the
    offending token within that line.
    """

    def __init__(self, message, line_number=None, offset=None, path=None):
        self.reason = message
        self.line_number = line_number
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line_number is not None:
            where.append('line %d' % line_number)
        if offset is not None:
            where.append('offset %d' % offset)
        if where:
            message = '%s: %s' % (', '.join(where), message)
        super().__init__(message)


class NumericalError(PlRankError, ArithmeticError):
    """Non-finite values or degenerate denominators during computation."""


class OracleSizeError(PlRankError, ValueError):
    """Exhaustive enumeration was requested for too large an instance."""


def effective_cutoff(n_items, cutoff):
    """Ranking length actually used: ``min(n_items, cutoff)``."""
    if n_items < 1 or cutoff < 1:
        raise ValueError('n_items and cutoff must be >= 1, got %r and %r'
                         % (n_items, cutoff))
    return min(int(n_items), int(cutoff))


LABEL_TRANSFORMS = ('identity', 'exponential-gain')


def transform_labels(raw_labels, scheme='identity', line_numbers=None):
    """Map integer relevance labels to gains.

    ``identity`` keeps the labels as floats, ``exponential-gain`` returns
    ``2**label - 1``. Negative labels are rejected; when ``line_numbers`` is
    given the error names the source line of the first offending label.
    """
    labels = np.asarray(raw_labels)
    if labels.ndim != 1:
        raise ValueError('labels must be a vector')
    negative = np.flatnonzero(labels < 0)
    if negative.size:
        i = int(negative[0])
        line = None if line_numbers is None else line_numbers[i]
        raise ParseError('negative relevance label %r' % labels[i].item(),
                         line_number=line)
    labels = labels.astype(np.float64)
    if scheme == 'identity':
        return labels
    if scheme == 'exponential-gain':
        return np.exp2(labels) - 1.0
    raise ValueError('unknown label transform %r (choose from %s)'
                     % (scheme, ', '.join(LABEL_TRANSFORMS)))


def _frozen(array):
    array.setflags(write=False)
    return array


def as_scores(scores):
    """Validate a score vector f(d) and return it as a read-only float array."""
    scores = np.array(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError('scores must be a non-empty vector')
    if not np.all(np.isfinite(scores)):
        raise NumericalError('scores contain NaN or Inf')
    return _frozen(scores)


def as_gradient(grad):
    grad = np.array(grad, dtype=np.float64)
    if grad.ndim != 1:
        raise ValueError('gradient must be a vector')
    if not np.all(np.isfinite(grad)):
        raise NumericalError('gradient contains NaN or Inf')
    return _frozen(grad)


@dataclass(frozen=True)
class QueryInstance:
    """One query: a D x F feature matrix and D relevance gains."""

    query_id: str
    features: np.ndarray
    relevances: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        relevances = np.array(self.relevances, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DataError('query %s: features must be a non-empty D x F matrix'
                            % self.query_id)
        if relevances.shape != (features.shape[0],):
            raise DataError('query %s: %d relevances for %d items'
                            % (self.query_id, relevances.size, features.shape[0]))
        if not np.all(np.isfinite(features)):
            raise DataError('query %s: features contain NaN or Inf' % self.query_id)
        if not np.all(np.isfinite(relevances)) or np.any(relevances < 0):
            raise DataError('query %s: relevances must be finite and >= 0'
                            % self.query_id)
        object.__setattr__(self, 'query_id', str(self.query_id))
        object.__setattr__(self, 'features', _frozen(features))
        object.__setattr__(self, 'relevances', _frozen(relevances))

    @property
    def n_items(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class MetricWeights:
    """Rank weights theta_1..theta_K; ``weights[k - 1]`` is the weight of rank k."""

    weights: np.ndarray
    scheme: str = 'custom'

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size < 1:
            raise ValueError('metric weights must be a non-empty vector')
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError('metric weights must be finite and >= 0')
        if self.scheme == 'dcg' and np.any(np.diff(weights) >= 0):
            raise ValueError('DCG weights must strictly decrease')
        object.__setattr__(self, 'weights', _frozen(weights))

    @property
    def cutoff(self):
        return self.weights.size

    def truncated(self, n_items):
        """Weights for the first ``min(n_items, K)`` ranks."""
        return self.weights[:effective_cutoff(n_items, self.cutoff)]


@dataclass(frozen=True)
class SampledRanking:
    """A top-K ordering of distinct item indices out of ``n_items``."""

    items: np.ndarray
    n_items: int
    inverse_rank: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        items = np.array(self.items, dtype=np.int64)
        if items.ndim != 1 or items.size < 1:
            raise ValueError('a ranking needs at least one item')
        if self.n_items < items.size:
            raise ValueError('ranking of length %d over only %d items'
                             % (items.size, self.n_items))
        if items.min() < 0 or items.max() >= self.n_items:
            raise ValueError('item index out of range [0, %d)' % self.n_items)
        if np.unique(items).size != items.size:
            raise ValueError('ranking contains duplicate items')
        object.__setattr__(self, 'items', _frozen(items))
        object.__setattr__(self, 'inverse_rank',
                           {int(d): k + 1 for k, d in enumerate(items)})

    def __len__(self):
        return self.items.size

    def rank_of(self, item):
        """1-based rank of ``item``, or None if it was not placed."""
        return self.inverse_rank.get(int(item))

    @classmethod
    def from_inverse(cls, inverse_rank, n_items):
        ordered = sorted(inverse_rank.items(), key=lambda kv: kv[1])
        if [r for _, r in ordered] != list(range(1, len(ordered) + 1)):
            raise ValueError('inverse ranks must be exactly 1..n')
        return cls(np.array([d for d, _ in ordered]), n_items)


def rankings_to_array(rankings, n_items):
    """Stack rankings into an (N, K) int array, validating along the way.

    Accepts a sequence of SampledRanking or an integer array that is
    already (N, K).
    """
    if isinstance(rankings, np.ndarray):
        array = np.asarray(rankings, dtype=np.int64)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError('ranking array must be (N, K) with N, K >= 1')
        if array.min() < 0 or array.max() >= n_items:
            raise ValueError('item index out of range [0, %d)' % n_items)
        return array
    rankings = list(rankings)
    if not rankings:
        raise ValueError('at least one sampled ranking is required')
    length = len(rankings[0])
    for r in rankings:
        if r.n_items != n_items:
            raise ValueError('ranking over %d items used with %d scores'
                             % (r.n_items, n_items))
        if len(r) != length:
            raise ValueError('all rankings must have the same length')
    return np.stack([r.items for r in rankings])
