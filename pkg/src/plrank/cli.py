"""Command-line entry point: ``plrank {train,eval,bench,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error,
4 gradient-check failure.
"""

import argparse
import csv
import json
import logging
import os
import sys

from . import __version__
from .core import LABEL_TRANSFORMS, DataError, NumericalError
from .data import align_feature_counts, load_split, synthesize_dataset
from .gradients import ESTIMATORS
from .metrics import METRICS
from .model import ScorerConfig, init_scorer, load_checkpoint, save_checkpoint
from .training import (BENCH_COLUMNS, EPOCH_COLUMNS, MAX_GRADCHECK_ITEMS, bench,
                       evaluate_scorer, gradcheck, train)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL, EXIT_SUITE = 1, 2, 3, 4
EPOCH_SCHEMA = 'plrank.epochs/1'
BENCH_SCHEMA = 'plrank.bench/1'
TRAIN_SUMMARY_SCHEMA = 'plrank.train/1'

logger = logging.getLogger('plrank')


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '%s: error: %s\n' % (self.prog, message))


def _int_list(text):
    try:
        values = [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated integers: %r' % text)
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError('expected positive integers: %r' % text)
    return values


def _algo_list(text):
    values = [v.strip() for v in text.split(',') if v.strip()]
    unknown = [v for v in values if v not in ESTIMATORS]
    if not values or unknown:
        raise argparse.ArgumentTypeError('unknown estimator(s) %s; choose from %s'
                                         % (unknown, ', '.join(ESTIMATORS)))
    return values


def _add_data_flags(p, splits, synthetic_defaults):
    queries, items, features = synthetic_defaults
    g = p.add_argument_group('data')
    for name in splits:
        g.add_argument('--%s' % name, metavar='PATH',
                       help='LETOR/SVMLight %s file (gzip allowed)' % name)
    g.add_argument('--synthetic', action='store_true',
                   help='generate seeded synthetic data instead of reading files')
    g.add_argument('--synthetic-queries', type=int, default=queries,
                   help='queries per synthetic split (default %(default)s)')
    g.add_argument('--synthetic-items', type=int, default=items,
                   help='items per synthetic query (default %(default)s)')
    g.add_argument('--synthetic-features', type=int, default=features,
                   help='features of synthetic items (default %(default)s)')
    g.add_argument('--relevant-fraction', type=float, default=0.3,
                   help='fraction of relevant synthetic items (default %(default)s)')
    g.add_argument('--data-seed', type=int, default=None,
                   help='synthetic data seed (default: --seed)')
    g.add_argument('--label-transform', choices=LABEL_TRANSFORMS, default='identity',
                   help='map labels to gains (default %(default)s)')


def _add_model_flags(p):
    g = p.add_argument_group('model')
    g.add_argument('--arch', choices=('linear', 'mlp'), default='mlp')
    g.add_argument('--hidden', type=_int_list, default=[32, 32],
                   help='comma-separated hidden layer sizes (default 32,32)')
    g.add_argument('--lr', type=float, default=0.01, help='learning rate (default 0.01)')


def build_parser():
    parser = _Parser(prog='plrank', description=(
        'Optimize Plackett-Luce ranking models with PL-Rank-3 or PL-Rank-2.'))
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', parser_class=_Parser, required=True)

    p = sub.add_parser('train', help='train a scorer, write epoch CSV and checkpoint')
    p.add_argument('--algo', choices=sorted(ESTIMATORS), default='plrank3')
    p.add_argument('--cutoff', type=int, default=5, help='metric cutoff K')
    p.add_argument('--samples', type=int, default=100,
                   help='sampled rankings per query per epoch (N)')
    p.add_argument('--epochs', type=int, default=30)
    p.add_argument('--metric', choices=sorted(METRICS), default='dcg')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, metavar='DIR',
                   help='output directory for epochs.csv, checkpoint.json, summary.json')
    p.add_argument('--no-timing', action='store_true',
                   help='leave wall_s/grad_s empty so outputs are byte-reproducible')
    _add_model_flags(p)
    _add_data_flags(p, ('train', 'valid'), (100, 20, 10))

    p = sub.add_parser('eval', help='deterministic dataset-level NDCG@K of a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--cutoff', type=int, default=5)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', metavar='FILE', help='write the JSON report here (default stdout)')
    _add_data_flags(p, ('test',), (100, 20, 10))

    p = sub.add_parser('bench', help='per-epoch timing table as CSV')
    p.add_argument('--algo', type=_algo_list, default=['plrank2', 'plrank3'],
                   help='comma-separated estimators (default plrank2,plrank3)')
    p.add_argument('--cutoffs', type=_int_list, default=[5, 10, 25, 50, 100])
    p.add_argument('--samples', type=_int_list, default=[100])
    p.add_argument('--repeats', type=int, default=3)
    p.add_argument('--warmup', type=int, default=1,
                   help='epochs run first and excluded from statistics (default 1)')
    p.add_argument('--metric', choices=sorted(METRICS), default='dcg')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', metavar='FILE', help='CSV path (default stdout)')
    _add_model_flags(p)
    _add_data_flags(p, ('train',), (1000, 1000, 10))

    p = sub.add_parser('gradcheck', help='randomized estimator and oracle checks')
    p.add_argument('--cases', type=int, default=20)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--max-items', type=int, default=5,
                   help='largest instance, at most %d' % MAX_GRADCHECK_ITEMS)
    p.add_argument('--samples-for-estimate', type=int, default=200000)
    return parser


def _synthetic(args, split, n_queries=None):
    seed = args.seed if args.data_seed is None else args.data_seed
    return synthesize_dataset(n_queries or args.synthetic_queries, args.synthetic_items,
                              args.synthetic_features, args.relevant_fraction, seed,
                              split=split, label_transform=args.label_transform)


def _load(args, names):
    if args.synthetic:
        if any(getattr(args, n) for n in names):
            raise UsageError('--synthetic cannot be combined with data files')
        split_names = {'train': 'train', 'valid': 'validation', 'test': 'test'}
        return [_synthetic(args, split_names[n]) for n in names]
    missing = [n for n in names if not getattr(args, n)]
    if missing:
        raise UsageError('missing --%s (or use --synthetic)' % ' --'.join(missing))
    splits = [load_split(getattr(args, n), args.label_transform) for n in names]
    return align_feature_counts(*splits)


def _config(args):
    return ScorerConfig(architecture=args.arch, hidden_sizes=tuple(args.hidden),
                        init_seed=args.seed, learning_rate=args.lr)


def _fmt(value):
    return repr(float(value))


def cmd_train(args):
    if args.cutoff < 1 or args.samples < 1 or args.epochs < 0:
        raise UsageError('need --cutoff >= 1, --samples >= 1, --epochs >= 0')
    train_split, valid_split = _load(args, ('train', 'valid'))
    os.makedirs(args.out, exist_ok=True)
    config = _config(args)
    csv_path = os.path.join(args.out, 'epochs.csv')
    with open(csv_path, 'w', newline='') as f:
        f.write('# schema: %s\n' % EPOCH_SCHEMA)
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(EPOCH_COLUMNS)

        def on_epoch(r):
            timing = ('', '') if args.no_timing else (_fmt(r.wall_s), _fmt(r.grad_s))
            writer.writerow((r.epoch,) + timing + (_fmt(r.train_metric),
                                                   _fmt(r.val_ndcg)))
            f.flush()

        result = train(train_split, valid_split, config, algo=args.algo,
                       cutoff=args.cutoff, n_samples=args.samples, epochs=args.epochs,
                       metric=args.metric, seed=args.seed, on_epoch=on_epoch)
    save_checkpoint(os.path.join(args.out, 'checkpoint.json'), result.scorer,
                    result.standardizer)
    final = result.epochs[-1].val_ndcg if result.epochs else result.initial_val_ndcg
    summary = {'schema': TRAIN_SUMMARY_SCHEMA, 'algo': args.algo, 'cutoff': args.cutoff,
               'samples': args.samples, 'epochs': args.epochs, 'metric': args.metric,
               'seed': args.seed, 'initial_val_ndcg': result.initial_val_ndcg,
               'final_val_ndcg': final}
    with open(os.path.join(args.out, 'summary.json'), 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write('\n')
    print('validation NDCG@%d: %.4f -> %.4f' % (args.cutoff, result.initial_val_ndcg,
                                                final))
    return 0


def cmd_eval(args):
    if args.cutoff < 1:
        raise UsageError('--cutoff must be >= 1')
    scorer, standardizer = load_checkpoint(args.checkpoint)
    (split,) = _load(args, ('test',))
    expected = standardizer.n_input if standardizer is not None else scorer.n_features
    if split.feature_count > expected:
        raise DataError('test data has %d features, checkpoint expects %d'
                        % (split.feature_count, expected))
    split = split.with_feature_count(expected)
    report = evaluate_scorer(scorer, standardizer, split.queries, args.cutoff)
    text = report.to_json(indent=2, sort_keys=True) + '\n'
    if args.out:
        with open(args.out, 'w') as f:
            f.write(text)
        print('dataset NDCG@%d: %.4f' % (args.cutoff, report.dataset_ndcg))
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args):
    if args.repeats < 1 or args.warmup < 0:
        raise UsageError('need --repeats >= 1 and --warmup >= 0')
    (split,) = _load(args, ('train',))
    out = open(args.out, 'w', newline='') if args.out else sys.stdout
    try:
        out.write('# schema: %s\n' % BENCH_SCHEMA)
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(BENCH_COLUMNS)

        def on_row(row):
            writer.writerow([row['algo'], row['K'], row['N'], row['repeats'],
                             _fmt(row['mean_s']), _fmt(row['std_s']),
                             _fmt(row['grad_mean_s'])])
            out.flush()

        bench(split, _config(args), algos=args.algo, cutoffs=args.cutoffs,
              samples=args.samples, repeats=args.repeats, warmup=args.warmup,
              metric=args.metric, seed=args.seed, on_row=on_row)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_gradcheck(args):
    if args.max_items > MAX_GRADCHECK_ITEMS or args.max_items < 1:
        raise UsageError('--max-items must lie in 1..%d (exhaustive oracle limit)'
                         % MAX_GRADCHECK_ITEMS)
    if args.cases < 0 or args.samples_for_estimate < 2:
        raise UsageError('need --cases >= 0 and --samples-for-estimate >= 2')
    if args.cases == 0:
        logger.warning('--cases 0: nothing to check')
    report = gradcheck(cases=args.cases, seed=args.seed, max_items=args.max_items,
                       n_samples=args.samples_for_estimate,
                       on_case=lambda r: print(r.line()))
    for name, ok in (('equivalence', report.equivalence_ok),
                     ('unbiasedness', report.unbiased_ok),
                     ('finite-difference', report.finite_difference_ok)):
        print('%-18s %s' % (name, 'PASS' if ok else 'FAIL'))
    return 0 if report.passed else EXIT_SUITE


COMMANDS = {'train': cmd_train, 'eval': cmd_eval, 'bench': cmd_bench,
            'gradcheck': cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print('plrank: error: %s' % e, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print('plrank: data error: %s' % e, file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print('plrank: numerical error: %s' % e, file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
