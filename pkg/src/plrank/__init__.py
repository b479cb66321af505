"""Plackett-Luce learning to rank with the PL-Rank-3 gradient estimator."""

__version__ = '0.1.0'

from .core import (DataError, MetricWeights, NumericalError, OracleSizeError,
                   ParseError, PlRankError, QueryInstance, SampledRanking,
                   effective_cutoff, transform_labels)
from .gradients import (OpCounter, PlRank3Workspace, build_workspace, plrank2_estimate,
                        plrank3_estimate)
from .metrics import dataset_ndcg, dcg_weights, metric_value, precision_weights
from .sampling import (RngStream, gumbel_sample_rankings, placement_probability,
                       ranking_log_probability)
