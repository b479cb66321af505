"""LETOR / SVMLight ranking data: parsing, loading, writing, synthesis.

Line grammar::

    <label> qid:<qid> (<fid>:<value>)* (# <comment>)?

Labels are non-negative integers, fids positive 1-based integers, values
finite floats. Missing fids densify to 0.0.
"""

import gzip
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .core import DataError, ParseError, QueryInstance, transform_labels

logger = logging.getLogger(__name__)

_TOKEN = re.compile(rb'\S+')
_INT = re.compile(rb'[0-9]+')
_GZIP_MAGIC = b'\x1f\x8b'
SPLIT_NAMES = ('train', 'validation', 'test')


def parse_line(line, line_number=None):
    """Parse one data line into ``(label, qid, {fid: value})``.

    Raises ParseError carrying the line number and the byte offset of the
    offending token.
    """
    if isinstance(line, str):
        line = line.encode('utf-8')
    content = line.split(b'#', 1)[0]
    tokens = [(m.start(), m.group()) for m in _TOKEN.finditer(content)]

    def fail(reason, offset):
        raise ParseError(reason, line_number=line_number, offset=offset)

    if not tokens:
        fail('missing label', len(content.rstrip(b'\r\n')))
    offset, token = tokens[0]
    if not _INT.fullmatch(token):
        if token.startswith(b'-') and _INT.fullmatch(token[1:]):
            fail('negative label %s' % token.decode(errors='replace'), offset)
        fail('label %r is not a non-negative integer'
             % token.decode(errors='replace'), offset)
    label = int(token)
    if len(tokens) < 2:
        fail('missing qid', len(content.rstrip()))
    offset, token = tokens[1]
    if not token.startswith(b'qid:') or len(token) == 4:
        fail('expected qid:<id>, got %r' % token.decode(errors='replace'), offset)
    qid = token[4:].decode('utf-8', errors='replace')

    features = {}
    for offset, token in tokens[2:]:
        fid_text, sep, value_text = token.partition(b':')
        if not sep or not value_text:
            fail('malformed feature token %r' % token.decode(errors='replace'), offset)
        if not _INT.fullmatch(fid_text):
            fail('feature id %r is not a positive integer'
                 % fid_text.decode(errors='replace'), offset)
        fid = int(fid_text)
        if fid <= 0:
            fail('feature id must be >= 1, got %d' % fid, offset)
        try:
            value = float(value_text)
        except ValueError:
            fail('feature value %r is not a number'
                 % value_text.decode(errors='replace'), offset + len(fid_text) + 1)
        if not math.isfinite(value):
            fail('feature value %r is not finite' % value_text.decode(),
                 offset + len(fid_text) + 1)
        if fid in features:
            fail('duplicate feature id %d' % fid, offset)
        features[fid] = value
    return label, qid, features


def format_line(label, qid, features, comment=None):
    """Inverse of parse_line; ``features`` maps fid to value."""
    parts = ['%d' % label, 'qid:%s' % qid]
    parts.extend('%d:%r' % (fid, float(v)) for fid, v in sorted(features.items()))
    if comment:
        parts.append('# %s' % comment)
    return ' '.join(parts)


@dataclass
class DatasetSplit:
    """Queries of one split plus the raw integer labels they were built from."""

    queries: list
    feature_count: int
    source_path: str = None
    labels: list = field(default=None, repr=False)
    label_transform: str = 'identity'
    merge_warnings: int = 0

    @property
    def stats(self):
        """Per-feature (mean, stddev) over every item of the split."""
        stacked = np.concatenate([q.features for q in self.queries])
        return stacked.mean(axis=0), stacked.std(axis=0)

    @property
    def n_items(self):
        return sum(q.n_items for q in self.queries)

    def with_feature_count(self, n_features):
        """Copy with feature matrices zero-padded to ``n_features`` columns."""
        if n_features < self.feature_count:
            raise DataError('cannot shrink %d features to %d'
                            % (self.feature_count, n_features))
        if n_features == self.feature_count:
            return self
        queries = []
        for q in self.queries:
            padded = np.zeros((q.n_items, n_features))
            padded[:, :self.feature_count] = q.features
            queries.append(QueryInstance(q.query_id, padded, q.relevances))
        return DatasetSplit(queries, n_features, self.source_path, self.labels,
                            self.label_transform, self.merge_warnings)


def align_feature_counts(*splits):
    """Pad all splits to the largest feature count among them."""
    n_features = max(s.feature_count for s in splits)
    return [s.with_feature_count(n_features) for s in splits]


def _open(path):
    with open(path, 'rb') as f:
        magic = f.read(2)
    return gzip.open(path, 'rb') if magic == _GZIP_MAGIC else open(path, 'rb')


def load_split(path, label_transform='identity', n_features=None):
    """Read a LETOR file into a DatasetSplit, grouping lines by qid.

    Items keep file order within a query. A qid that reappears after other
    qids is merged into its first block and counted in ``merge_warnings``.
    Blank and comment-only lines are skipped.
    """
    groups = {}
    merges = 0
    previous = None
    max_fid = 0
    with _open(path) as f:
        for line_number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith(b'#'):
                continue
            try:
                label, qid, features = parse_line(line, line_number)
            except ParseError as e:
                raise ParseError(e.reason, e.line_number, e.offset, path) from None
            if qid != previous and qid in groups:
                merges += 1
            previous = qid
            rows = groups.setdefault(qid, ([], [], []))
            rows[0].append(label)
            rows[1].append(features)
            rows[2].append(line_number)
            if features:
                max_fid = max(max_fid, max(features))
    if not groups:
        raise DataError('%s: no data lines' % path)
    if merges:
        logger.warning('%s: %d non-contiguous qid blocks merged', path, merges)
    if n_features is not None:
        if n_features < max_fid:
            raise DataError('%s: feature id %d exceeds requested %d features'
                            % (path, max_fid, n_features))
        max_fid = n_features
    queries, labels = [], []
    for qid, (raw, sparse, lines) in groups.items():
        dense = np.zeros((len(raw), max_fid))
        for i, features in enumerate(sparse):
            for fid, value in features.items():
                dense[i, fid - 1] = value
        rel = transform_labels(raw, label_transform, line_numbers=lines)
        queries.append(QueryInstance(qid, dense, rel))
        labels.append(np.array(raw, dtype=np.int64))
    return DatasetSplit(queries, max_fid, str(path), labels, label_transform, merges)


def write_split(split, path):
    """Write a split in LETOR format, every feature written explicitly."""
    if split.labels is None:
        raise DataError('split has no raw labels to write')
    with open(path, 'w') as f:
        for query, labels in zip(split.queries, split.labels):
            for label, row in zip(labels, query.features):
                features = {fid: row[fid - 1] for fid in range(1, split.feature_count + 1)}
                f.write(format_line(int(label), query.query_id, features) + '\n')


def synthesize_dataset(n_queries, items_per_query, n_features, relevant_fraction,
                       seed, split='train', label_transform='identity'):
    """Gaussian features with labels from a hidden linear model plus noise.

    The hidden model depends only on ``seed``, so train, validation and test
    splits drawn with the same seed share it. Per query the top
    ``relevant_fraction`` of items by latent utility get labels 1..4, the
    best ones 4; everything else is 0.
    """
    if min(n_queries, items_per_query, n_features) < 1:
        raise ValueError('counts must be positive')
    if not 0.0 <= relevant_fraction <= 1.0:
        raise ValueError('relevant_fraction must lie in [0, 1]')
    if split not in SPLIT_NAMES:
        raise ValueError('split must be one of %s' % (SPLIT_NAMES,))
    hidden = hidden_weights(n_features, seed)
    rng = np.random.default_rng([seed, 1 + SPLIT_NAMES.index(split)])
    n_relevant = int(round(relevant_fraction * items_per_query))
    queries, labels = [], []
    for i in range(n_queries):
        x = rng.standard_normal((items_per_query, n_features))
        latent = x @ hidden + 0.5 * rng.standard_normal(items_per_query)
        raw = np.zeros(items_per_query, dtype=np.int64)
        if n_relevant:
            order = np.argsort(-latent, kind='stable')[:n_relevant]
            raw[order] = 4 - (4 * np.arange(n_relevant)) // n_relevant
        queries.append(QueryInstance('%s-%d' % (split, i), x,
                                     transform_labels(raw, label_transform)))
        labels.append(raw)
    return DatasetSplit(queries, n_features, None, labels, label_transform)


def hidden_weights(n_features, seed):
    """The synthetic generator's hidden linear model."""
    w = np.random.default_rng([seed, 0]).standard_normal(n_features)
    return w / np.sqrt(n_features)
