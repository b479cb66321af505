"""Exit criteria, one test per criterion, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""

import csv
import json
import math
import time
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from plrank import oracle
from plrank.cli import main
from plrank.data import ParseError, load_split, parse_line, synthesize_dataset, write_split
from plrank.gradients import plrank2_estimate, plrank3_estimate, plrank3_sample_gradients
from plrank.metrics import dcg_weights, precision_weights
from plrank.model import ScorerConfig
from plrank.oracle import enumerate_rankings
from plrank.sampling import RngStream, ranking_log_probability, sample_ranking_matrix
from plrank.training import bench, relative_deviation, standard_scores


def _random_theta(rng, k):
    return dcg_weights(k) if rng.random() < 0.5 else precision_weights(k)


def test_1_estimator_identity(criterion):
    rng = np.random.default_rng(2022)
    start = time.perf_counter()
    worst = 0.0
    for case in range(120):
        n = int(rng.integers(1, 51))
        k = int(rng.integers(1, n + 1))
        theta = _random_theta(rng, k)
        scores = rng.standard_normal(n)
        rho = rng.integers(0, 5, n).astype(float)
        rankings = sample_ranking_matrix(scores, k, 100, RngStream(2022, str(case)))
        fast = plrank3_estimate(scores, rho, theta, rankings)
        slow = plrank2_estimate(scores, rho, theta, rankings)
        worst = max(worst, relative_deviation(fast, slow))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    criterion(1, 'PL-Rank-2 == PL-Rank-3 on 120 instances', ok,
              'max rel dev %.1e, %.1fs' % (worst, elapsed))
    assert worst <= 1e-9
    assert elapsed < 10


def test_2_unbiased_against_oracle(criterion):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    total = failed = 0
    for case in range(20):
        n = int(rng.integers(2, 5))
        k = int(rng.integers(1, n + 1))
        theta = _random_theta(rng, k)
        scores = rng.standard_normal(n)
        rho = rng.integers(0, 5, n).astype(float)
        exact = oracle.exact_gradient(scores, rho, theta)
        rankings = sample_ranking_matrix(scores, k, 200000, RngStream(7, str(case)))
        z = standard_scores(plrank3_sample_gradients(scores, rho, theta, rankings), exact)
        total += n
        failed += int(np.count_nonzero(z > 3.0))
    elapsed = time.perf_counter() - start
    fraction = 1 - failed / total
    ok = fraction >= 0.95 and elapsed < 120
    criterion(2, 'PL-Rank-3 within 3 SE of exact gradient', ok,
              '%d/%d components pass (%.1f%%), %.1fs' % (total - failed, total,
                                                         100 * fraction, elapsed))
    assert fraction >= 0.95
    assert elapsed < 120


def test_3_oracle_gradient_correct(criterion):
    rng = np.random.default_rng(3)
    worst_fd = worst_sum = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 6))
        k = int(rng.integers(1, n + 1))
        theta = _random_theta(rng, k)
        scores = rng.standard_normal(n) * 1.5
        rho = rng.integers(0, 5, n).astype(float)
        exact = oracle.exact_gradient(scores, rho, theta)
        fd = oracle.finite_difference_gradient(scores, rho, theta, step=1e-5)
        worst_fd = max(worst_fd, float(np.max(np.abs(exact - fd))))
        worst_sum = max(worst_sum, abs(float(exact.sum())))
    ok = worst_fd <= 1e-5 and worst_sum <= 1e-8
    criterion(3, 'exact gradient vs finite differences, zero sum', ok,
              'max |fd| %.1e, max |sum| %.1e' % (worst_fd, worst_sum))
    assert worst_fd <= 1e-5
    assert worst_sum <= 1e-8


def test_4_sampler_correct(criterion):
    scores = np.random.default_rng(4).standard_normal(3)
    n = 100000
    rankings = sample_ranking_matrix(scores, 3, n, RngStream(4, 'chi2'))
    counts = Counter(map(tuple, rankings.tolist()))
    perms = [tuple(p) for p in enumerate_rankings(3, 3)]
    observed = np.array([counts[p] for p in perms])
    probs = np.array([math.exp(ranking_log_probability(scores, list(p))) for p in perms])
    p_value = chisquare(observed, probs * n).pvalue

    m = 40000
    first = sample_ranking_matrix([math.log(3), 0.0], 1, m, RngStream(4, 'coin'))
    freq = float(np.mean(first[:, 0] == 0))
    se = math.sqrt(0.75 * 0.25 / m)
    ok = p_value > 0.001 and abs(freq - 0.75) <= 4 * se
    criterion(4, 'Gumbel sampler matches PL probabilities', ok,
              'chi2 p=%.3f, P(first)=%.4f (4 SE=%.4f)' % (p_value, freq, 4 * se))
    assert p_value > 0.001
    assert abs(freq - 0.75) <= 4 * se


def test_5_complexity_trend(criterion):
    start = time.perf_counter()
    split = synthesize_dataset(1000, 1000, 10, 0.3, seed=5)
    rows = bench(split, ScorerConfig('mlp', init_seed=5), algos=('plrank3', 'plrank2'),
                 cutoffs=(5, 100), samples=(100,), repeats=1, warmup=1, seed=5)
    grad = {(r['algo'], r['K']): r['grad_mean_s'] for r in rows}
    ratio3 = grad['plrank3', 100] / grad['plrank3', 5]
    ratio2 = grad['plrank2', 100] / grad['plrank2', 5]
    elapsed = time.perf_counter() - start
    ok = ratio3 <= 2.0 and ratio2 >= 4.0 and elapsed < 600
    criterion(5, 'gradient time K=100/K=5 (D=1000, N=100)', ok,
              'PL-Rank-3 %.2fx, PL-Rank-2 %.2fx, %.0fs' % (ratio3, ratio2, elapsed))
    assert ratio3 <= 2.0
    assert ratio2 >= 4.0
    assert elapsed < 600


def test_6_learning_improves_ndcg(criterion, tmp_path):
    start = time.perf_counter()
    gains = []
    for seed in range(5):
        out = tmp_path / str(seed)
        assert main(['train', '--synthetic', '--algo', 'plrank3', '--cutoff', '5',
                     '--samples', '100', '--epochs', '30', '--lr', '0.01',
                     '--seed', str(seed), '--out', str(out)]) == 0
        summary = json.loads((out / 'summary.json').read_text())
        gains.append(summary['final_val_ndcg'] - summary['initial_val_ndcg'])
    elapsed = time.perf_counter() - start
    mean_gain = float(np.mean(gains))
    ok = mean_gain >= 0.05 and elapsed < 300
    criterion(6, 'training raises validation NDCG@5', ok,
              'mean gain %.3f over 5 seeds, %.0fs' % (mean_gain, elapsed))
    assert mean_gain >= 0.05
    assert elapsed < 300


def test_7_determinism(criterion, tmp_path):
    args = ['train', '--synthetic', '--algo', 'plrank3', '--cutoff', '5', '--samples',
            '100', '--epochs', '5', '--seed', '11', '--no-timing']
    assert main(args + ['--out', str(tmp_path / 'a')]) == 0
    assert main(args + ['--out', str(tmp_path / 'b')]) == 0
    same = all((tmp_path / 'a' / f).read_bytes() == (tmp_path / 'b' / f).read_bytes()
               for f in ('epochs.csv', 'checkpoint.json'))
    # timed runs differ only in the wall-clock columns
    timed = args[:-1]
    assert main(timed + ['--out', str(tmp_path / 'c')]) == 0
    with open(tmp_path / 'a' / 'epochs.csv') as fa, open(tmp_path / 'c' / 'epochs.csv') as fc:
        ra = list(csv.DictReader(fa.readlines()[1:]))
        rc = list(csv.DictReader(fc.readlines()[1:]))
    untimed_equal = all(a[c] == b[c] for a, b in zip(ra, rc)
                        for c in ('epoch', 'train_metric', 'val_ndcg'))
    same_ckpt = ((tmp_path / 'a' / 'checkpoint.json').read_bytes()
                 == (tmp_path / 'c' / 'checkpoint.json').read_bytes())
    ok = same and untimed_equal and same_ckpt and len(ra) == 5
    criterion(7, 'identical train invocations are byte-identical', ok,
              'epochs.csv + checkpoint.json')
    assert same and untimed_equal and same_ckpt


PARSE_ERRORS = [
    ('1 qid:1 1:0.5 2:abc', 16, 'not a number'),
    ('x qid:1 1:0.5', 0, 'label'),
    ('1 qid1 1:0.5', 2, 'qid'),
    ('3 qid:4 1:0.5 9:1 1:0.25', 18, 'duplicate'),
    ('1 qid:1 1:0.5 0:2', 14, '>= 1'),
]


def test_8_parser_suite(criterion, tmp_path):
    well_formed = parse_line('2 qid:10 1:0.5 7:1.0 # doc-a') == (2, '10', {1: 0.5, 7: 1.0})
    empty = parse_line('0 qid:3') == (0, '3', {})
    diagnostics = []
    for line, offset, fragment in PARSE_ERRORS:
        try:
            parse_line(line, line_number=5)
        except ParseError as e:
            diagnostics.append(e.line_number == 5 and e.offset == offset
                               and fragment in str(e))
        else:
            diagnostics.append(False)

    text = ('2 qid:10 1:0.5 7:1.0 # doc-a\n0 qid:10\n1 qid:11 2:0.001 3:-4.5\n'
            '0 qid:10 7:2\n')
    (tmp_path / 'in.txt').write_text(text)
    first = load_split(tmp_path / 'in.txt')
    write_split(first, tmp_path / 'out.txt')
    second = load_split(tmp_path / 'out.txt')
    round_trip = (first.feature_count == second.feature_count == 7
                  and first.merge_warnings == 1
                  and all(a.query_id == b.query_id
                          and np.array_equal(a.features, b.features)
                          and np.array_equal(a.relevances, b.relevances)
                          for a, b in zip(first.queries, second.queries)))
    (tmp_path / 'bad.txt').write_text('1 qid:1 1:1\n\n1 qid:1 1:1 1:2\n')
    with pytest.raises(ParseError) as err:
        load_split(tmp_path / 'bad.txt')
    in_file = err.value.line_number == 3 and err.value.offset == 12

    ok = well_formed and empty and all(diagnostics) and round_trip and in_file
    criterion(8, 'LETOR parser round-trip and diagnostics', ok,
              '%d/%d error cases exact' % (sum(diagnostics), len(diagnostics)))
    assert well_formed and empty and round_trip and in_file
    assert all(diagnostics)
