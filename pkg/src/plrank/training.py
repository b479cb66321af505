"""Training loop, timing harness and randomized gradient checks."""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .core import DataError, NumericalError, effective_cutoff
from .gradients import ESTIMATORS, plrank2_estimate, plrank3_sample_gradients
from .metrics import batch_metric_values, evaluate_rankings, metric_weights
from .model import Standardizer, apply_gradient, init_scorer
from .sampling import RngStream, sample_ranking_matrix

logger = logging.getLogger(__name__)

# spawn-key tag separating shuffle streams from per-query sampling streams
_SHUFFLE_KEY = 0x5348554646

EPOCH_COLUMNS = ('epoch', 'wall_s', 'grad_s', 'train_metric', 'val_ndcg')
BENCH_COLUMNS = ('algo', 'K', 'N', 'repeats', 'mean_s', 'std_s', 'grad_mean_s')


@dataclass
class EpochRecord:
    epoch: int
    wall_s: float
    grad_s: float
    train_metric: float
    val_ndcg: float


@dataclass
class TrainResult:
    scorer: object
    standardizer: Standardizer
    initial_val_ndcg: float
    epochs: list = field(default_factory=list)


def shuffled_order(n_queries, seed, epoch):
    seq = np.random.SeedSequence(entropy=int(seed) % 2**64,
                                 spawn_key=(_SHUFFLE_KEY, int(epoch)))
    return np.random.Generator(np.random.PCG64(seq)).permutation(n_queries)


def fit_standardizer(split):
    standardizer = Standardizer.fit(q.features for q in split.queries)
    if standardizer.n_output == 0:
        raise DataError('every feature is constant on the training split')
    return standardizer


def evaluate_scorer(scorer, standardizer, queries, cutoff):
    """Dataset-level NDCG@K of the deterministic ranking by score."""
    def score(query):
        x = query.features if standardizer is None else standardizer(query.features)
        return scorer.score(x)
    return evaluate_rankings(queries, score, cutoff)


def run_epoch(scorer, queries, inputs, algo, theta, n_samples, seed, epoch):
    """One pass over the queries in seeded shuffled order, updating per query.

    Returns (scorer, wall_s, grad_s, train_metric). ``grad_s`` covers
    scoring-independent gradient work only: sampling plus estimation.
    ``train_metric`` is the mean over queries of the sampled metric value.
    """
    estimator = ESTIMATORS[algo]
    grad_s = 0.0
    metric_total = 0.0
    start = time.perf_counter()
    for index in shuffled_order(len(queries), seed, epoch):
        query = queries[index]
        x = inputs[index]
        scores = scorer.score(x)
        tick = time.perf_counter()
        try:
            rankings = sample_ranking_matrix(
                scores, theta.cutoff, n_samples,
                RngStream(seed, query.query_id, epoch, 0))
            grad = estimator(scores, query.relevances, theta, rankings,
                             query_id=query.query_id)
        except NumericalError as e:
            raise NumericalError('epoch %d, query %s: %s'
                                 % (epoch, query.query_id, e)) from e
        grad_s += time.perf_counter() - tick
        metric_total += batch_metric_values(rankings, query.relevances, theta).mean()
        scorer = apply_gradient(scorer, x, grad)
    wall_s = time.perf_counter() - start
    return scorer, wall_s, grad_s, metric_total / len(queries)


def train(train_split, valid_split, config, algo='plrank3', cutoff=5, n_samples=100,
          epochs=30, metric='dcg', seed=0, on_epoch=None):
    """Optimize the expected metric with the chosen estimator.

    Rankings are resampled every epoch from epoch-indexed substreams, so
    the run is fully determined by ``seed``, ``config`` and the data.
    """
    if algo not in ESTIMATORS:
        raise ValueError('unknown estimator %r' % algo)
    if n_samples < 1 or cutoff < 1 or epochs < 0:
        raise ValueError('need samples >= 1, cutoff >= 1 and epochs >= 0')
    theta = metric_weights(metric, cutoff)
    standardizer = fit_standardizer(train_split)
    inputs = [standardizer(q.features) for q in train_split.queries]
    scorer = init_scorer(config, standardizer.n_output)
    initial = evaluate_scorer(scorer, standardizer, valid_split.queries, cutoff)
    result = TrainResult(scorer, standardizer, initial.dataset_ndcg)
    for epoch in range(1, epochs + 1):
        scorer, wall_s, grad_s, train_metric = run_epoch(
            scorer, train_split.queries, inputs, algo, theta, n_samples, seed, epoch)
        val = evaluate_scorer(scorer, standardizer, valid_split.queries, cutoff)
        record = EpochRecord(epoch, wall_s, grad_s, float(train_metric), val.dataset_ndcg)
        result.epochs.append(record)
        logger.info('epoch %d: val ndcg@%d %.4f (%.2fs)', epoch, cutoff,
                    record.val_ndcg, wall_s)
        if on_epoch is not None:
            on_epoch(record)
    result.scorer = scorer
    return result


def bench(split, config, algos=('plrank2', 'plrank3'), cutoffs=(5, 10, 25, 50, 100),
          samples=(100,), repeats=3, warmup=1, metric='dcg', seed=0, on_row=None):
    """Per-epoch timings for every (algo, K, N); warm-up epochs are discarded.

    Every combination starts from the same initialization and seed.
    """
    if repeats < 1 or warmup < 0:
        raise ValueError('need repeats >= 1 and warmup >= 0')
    standardizer = fit_standardizer(split)
    inputs = [standardizer(q.features) for q in split.queries]
    rows = []
    for algo in algos:
        if algo not in ESTIMATORS:
            raise ValueError('unknown estimator %r' % algo)
        for cutoff in cutoffs:
            theta = metric_weights(metric, cutoff)
            for n_samples in samples:
                scorer = init_scorer(config, standardizer.n_output)
                walls, grads = [], []
                for epoch in range(1, warmup + repeats + 1):
                    scorer, wall_s, grad_s, _ = run_epoch(
                        scorer, split.queries, inputs, algo, theta, n_samples,
                        seed, epoch)
                    if epoch > warmup:
                        walls.append(wall_s)
                        grads.append(grad_s)
                row = {'algo': algo, 'K': cutoff, 'N': n_samples, 'repeats': repeats,
                       'mean_s': float(np.mean(walls)), 'std_s': float(np.std(walls)),
                       'grad_mean_s': float(np.mean(grads))}
                logger.info('%s K=%d N=%d: %.3fs/epoch (grad %.3fs)', algo, cutoff,
                            n_samples, row['mean_s'], row['grad_mean_s'])
                rows.append(row)
                if on_row is not None:
                    on_row(row)
    return rows


MAX_GRADCHECK_ITEMS = 8


@dataclass
class CaseResult:
    case: int
    n_items: int
    cutoff: int
    metric: str
    equivalence_max_rel: float
    unbiased_max_z: float
    unbiased_failures: int
    fd_max_abs: float
    gradient_sum: float

    def line(self):
        return ('case %3d D=%d K=%d %-9s equiv_rel=%.2e max_z=%.2f '
                'fd_abs=%.2e sum=%.1e' % (self.case, self.n_items, self.cutoff,
                                          self.metric, self.equivalence_max_rel,
                                          self.unbiased_max_z, self.fd_max_abs,
                                          self.gradient_sum))


@dataclass
class GradcheckReport:
    cases: list
    components: int
    equivalence_ok: bool
    unbiased_ok: bool
    finite_difference_ok: bool

    @property
    def passed(self):
        return self.equivalence_ok and self.unbiased_ok and self.finite_difference_ok


def relative_deviation(a, b, floor=1e-12):
    """max |a - b| / max(|b|, floor / 1e-9), so <= 1e-9 means the stated tolerance."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor / 1e-9)))


def standard_scores(sample_grads, exact):
    """|mean - exact| / standard error per component (0 / 0 -> 0)."""
    n = sample_grads.shape[0]
    diff = np.abs(sample_grads.mean(axis=0) - exact)
    se = sample_grads.std(axis=0, ddof=1) / math.sqrt(n)
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                     np.where(diff <= 1e-9, 0.0, np.inf))
    return z


def gradcheck(cases=20, seed=0, max_items=5, n_samples=200000, equivalence_samples=100,
              z_limit=3.0, pass_fraction=0.95, fd_tolerance=1e-5, sum_tolerance=1e-8,
              equivalence_tolerance=1e-9, on_case=None):
    """Randomized PL-Rank-2 == PL-Rank-3, unbiasedness and oracle checks."""
    if max_items > MAX_GRADCHECK_ITEMS:
        raise ValueError('max_items %d exceeds the oracle limit of %d'
                         % (max_items, MAX_GRADCHECK_ITEMS))
    if max_items < 1:
        raise ValueError('max_items must be >= 1')
    rng = np.random.default_rng(seed)
    results = []
    total_components = failed_components = 0
    equivalence_ok = fd_ok = True
    for case in range(cases):
        n_items = int(rng.integers(1, max_items + 1))
        cutoff = int(rng.integers(1, n_items + 1))
        metric = ('dcg', 'precision')[int(rng.integers(2))]
        theta = metric_weights(metric, cutoff)
        scores = rng.standard_normal(n_items)
        rho = rng.integers(0, 5, n_items).astype(np.float64)
        stream = RngStream(seed, 'gradcheck-%d' % case)

        rankings = sample_ranking_matrix(scores, cutoff, equivalence_samples, stream)
        fast = plrank3_sample_gradients(scores, rho, theta, rankings).mean(axis=0)
        slow = plrank2_estimate(scores, rho, theta, rankings)
        equiv = relative_deviation(fast, slow)
        equivalence_ok &= equiv <= equivalence_tolerance

        exact = oracle.exact_gradient(scores, rho, theta)
        many = sample_ranking_matrix(scores, cutoff, n_samples,
                                     RngStream(seed, 'gradcheck-%d' % case, 0, 1))
        z = standard_scores(plrank3_sample_gradients(scores, rho, theta, many), exact)
        failures = int(np.count_nonzero(z > z_limit))
        total_components += n_items
        failed_components += failures

        fd = oracle.finite_difference_gradient(scores, rho, theta)
        fd_abs = float(np.max(np.abs(fd - exact)))
        grad_sum = float(abs(exact.sum()))
        fd_ok &= fd_abs <= fd_tolerance and grad_sum <= sum_tolerance

        result = CaseResult(case, n_items, effective_cutoff(n_items, cutoff), metric,
                            equiv, float(z.max()), failures, fd_abs, grad_sum)
        results.append(result)
        if on_case is not None:
            on_case(result)
    unbiased_ok = (total_components == 0
                   or failed_components <= (1 - pass_fraction) * total_components)
    return GradcheckReport(results, total_components, bool(equivalence_ok),
                           bool(unbiased_ok), bool(fd_ok))
