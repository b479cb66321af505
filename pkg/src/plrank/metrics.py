"""Rank weights, per-ranking metric values and dataset-level NDCG."""

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import MetricWeights, SampledRanking

REPORT_SCHEMA = 'plrank.eval/1'
_LOG2 = math.log(2.0)


def dcg_weights(cutoff):
    """theta_k = 1 / log2(1 + k) for k = 1..K."""
    if cutoff < 1:
        raise ValueError('cutoff must be >= 1')
    ranks = np.arange(1, cutoff + 1, dtype=np.float64)
    return MetricWeights(1.0 / (np.log(1.0 + ranks) / _LOG2), scheme='dcg')


def precision_weights(cutoff):
    if cutoff < 1:
        raise ValueError('cutoff must be >= 1')
    return MetricWeights(np.ones(cutoff), scheme='precision')


METRICS = {'dcg': dcg_weights, 'precision': precision_weights}


def metric_weights(name, cutoff):
    try:
        return METRICS[name](cutoff)
    except KeyError:
        raise ValueError('unknown metric %r' % name) from None


def metric_value(ranking, rho, theta):
    """sum_k theta_k * rho[y_k] over the first min(K, len(ranking)) ranks."""
    items = ranking.items if isinstance(ranking, SampledRanking) else np.asarray(ranking)
    weights = theta.weights if isinstance(theta, MetricWeights) else np.asarray(theta)
    n = min(weights.size, items.size)
    return float(np.dot(weights[:n], np.asarray(rho, dtype=np.float64)[items[:n]]))


def batch_metric_values(rankings, rho, theta):
    """metric_value for every row of an (N, K_eff) ranking array."""
    n = min(theta.cutoff, rankings.shape[1])
    return np.asarray(rho, dtype=np.float64)[rankings[:, :n]] @ theta.weights[:n]


def deterministic_ranking(scores):
    """Items sorted by descending score, ties by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def ideal_dcg(rho, theta):
    return metric_value(deterministic_ranking(rho), rho, theta)


@dataclass(frozen=True)
class EvaluationReport:
    cutoff: int
    per_query_dcg: dict
    per_query_ideal: dict
    ideal_dcg_total: float
    dataset_ndcg: float
    degenerate: bool = False

    def to_dict(self):
        return {
            'schema': REPORT_SCHEMA,
            'cutoff': self.cutoff,
            'dataset_ndcg': self.dataset_ndcg,
            'ideal_dcg_total': self.ideal_dcg_total,
            'degenerate': self.degenerate,
            'queries': {qid: {'dcg': self.per_query_dcg[qid],
                              'ideal_dcg': self.per_query_ideal[qid]}
                        for qid in self.per_query_dcg},
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def dataset_ndcg(model_dcg, ideal_dcg_per_query, cutoff=None, slack=1e-9):
    """Sum of model DCG over queries divided by the sum of ideal DCG.

    Returns an EvaluationReport; when every ideal DCG is zero the NDCG is
    reported as 0 and the report is flagged ``degenerate``.
    """
    if set(model_dcg) != set(ideal_dcg_per_query):
        raise ValueError('model and ideal DCG must cover the same queries')
    for qid, value in model_dcg.items():
        ideal = ideal_dcg_per_query[qid]
        if value < -slack or ideal < value - slack:
            raise ValueError('query %s: need 0 <= DCG (%g) <= ideal DCG (%g)'
                             % (qid, value, ideal))
    total_model = math.fsum(model_dcg.values())
    total_ideal = math.fsum(ideal_dcg_per_query.values())
    degenerate = total_ideal <= 0.0
    ndcg = 0.0 if degenerate else min(1.0, max(0.0, total_model / total_ideal))
    return EvaluationReport(cutoff=cutoff,
                            per_query_dcg={q: float(v) for q, v in model_dcg.items()},
                            per_query_ideal={q: float(ideal_dcg_per_query[q])
                                             for q in model_dcg},
                            ideal_dcg_total=total_ideal,
                            dataset_ndcg=ndcg,
                            degenerate=degenerate)


def evaluate_rankings(queries, score_fn, cutoff):
    """Dataset-level NDCG@K of ranking each query by descending score.

    ``score_fn`` maps a QueryInstance to its score vector.
    """
    theta = dcg_weights(cutoff)
    model, ideal = {}, {}
    for query in queries:
        order = deterministic_ranking(score_fn(query))
        model[query.query_id] = metric_value(order, query.relevances, theta)
        ideal[query.query_id] = ideal_dcg(query.relevances, theta)
    return dataset_ndcg(model, ideal, cutoff=cutoff)
