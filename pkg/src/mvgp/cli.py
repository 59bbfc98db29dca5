"""
Command-line front end.

    mvgp train      --views a.csv b.csv --method mvgp2 --out run/
    mvgp evaluate   --model run/model.json --views a_test.csv b_test.csv
    mvgp benchmark  --views data/ionosphere.csv --pca-components 24 --method gp1,mvgp1,mvgp2
    mvgp gradcheck  --seeds 20
    mvgp pca-view   --views data/ionosphere.csv --n-components 24 --out iono2/

Every flag can also be given in a JSON config file (``--config``) under the
flag's name with dashes replaced by underscores; flags win over the file.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradcheck, modelio, objective, trainer
from .dataset import SplitSpec, load_csv, pca_second_view, save_csv, split
from .errors import (ConfigError, DataError, ModelFormatError, MvgpError,
                     NumericalError)

logger = logging.getLogger('mvgp')

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
METHODS = ('gp1', 'gp2', 'gp3', 'mvgp1', 'mvgp2')
REPORT_VERSION = 1

FAST_A_GRID = (0.0, 0.5, 1.0)
FAST_B_GRID = (2.0 ** -8, 2.0 ** 3)
FAST_CV_REPEATS = 3
FAST_MAX_ITERS = 60


def parse_number(s):
    """Float from text, also accepting powers written as ``2^-18``."""
    s = str(s).strip()
    if '^' in s:
        base, exp = s.split('^', 1)
        return float(base) ** float(exp)
    return float(s)


def parse_grid(value):
    if isinstance(value, (list, tuple)):
        return tuple(parse_number(v) for v in value)
    return tuple(parse_number(v) for v in str(value).split(',') if v.strip())


@dataclass
class ExperimentConfig:
    views: list = field(default_factory=list)
    label_col: str = 'label'
    method: list = field(default_factory=lambda: ['mvgp2'])
    train_frac: float = 0.6
    seed: int = 0
    a_grid: tuple = trainer.DEFAULT_A_GRID
    b_grid: tuple = trainer.DEFAULT_B_GRID
    repeats: int = 5
    cv_repeats: int = 10
    max_iters: int = 200
    grad_tol: float = 1e-5
    out: str = None
    pca_components: int = None
    jobs: int = 1

    def validate(self):
        if not self.views:
            raise ConfigError('no --views given')
        bad = [m for m in self.method if m not in METHODS]
        if bad or not self.method:
            raise ConfigError('unknown method(s) %s; choose from %s'
                              % (', '.join(bad) or '(none)', ', '.join(METHODS)))
        if not self.a_grid or not self.b_grid:
            raise ConfigError('grids must be non-empty')
        if any(not 0.0 <= a <= 1.0 for a in self.a_grid):
            raise ConfigError('a-grid values must lie in [0, 1]')
        if any(b < 0 for b in self.b_grid):
            raise ConfigError('b-grid values must be non-negative')
        if self.repeats < 1 or self.cv_repeats < 1:
            raise ConfigError('repeat counts must be >= 1')
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError('--train-frac must lie in (0, 1)')
        if self.seed < 0:
            raise ConfigError('--seed must be non-negative')
        return self

    def optimizer(self, seed=None):
        return trainer.OptimizerConfig(max_iters=self.max_iters,
                                       grad_tol=self.grad_tol,
                                       seed=self.seed if seed is None else seed)

    @property
    def grids(self):
        return (tuple(self.a_grid), tuple(self.b_grid))


_CONVERT = {
    'views': lambda v: [str(p) for p in (v if isinstance(v, list) else [v])],
    'label_col': lambda v: v if isinstance(v, int) else str(v),
    'method': lambda v: ([m.strip() for m in v.split(',') if m.strip()]
                         if isinstance(v, str)
                         else [m for x in v for m in str(x).split(',') if m]),
    'train_frac': float, 'seed': int, 'a_grid': parse_grid, 'b_grid': parse_grid,
    'repeats': int, 'cv_repeats': int, 'max_iters': int, 'grad_tol': float,
    'out': str, 'pca_components': int, 'jobs': int,
}


def build_config(args):
    """Merge the optional JSON config file with command-line flags."""
    values = {}
    if getattr(args, 'config', None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, ValueError) as exc:
            raise ConfigError('cannot read config %s: %s' % (args.config, exc)) from None
    if getattr(args, 'fast', False):
        values.update(a_grid=list(FAST_A_GRID), b_grid=list(FAST_B_GRID),
                      cv_repeats=FAST_CV_REPEATS, max_iters=FAST_MAX_ITERS)
    for key in _CONVERT:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    unknown = set(values) - set(_CONVERT)
    if unknown:
        raise ConfigError('unknown config keys: %s' % ', '.join(sorted(unknown)))
    try:
        converted = {k: _CONVERT[k](v) for k, v in values.items() if v is not None}
    except (TypeError, ValueError) as exc:
        raise ConfigError('bad config value: %s' % exc) from None
    return ExperimentConfig(**converted).validate()


def load_dataset(cfg):
    data = load_csv(cfg.views, cfg.label_col)
    if cfg.pca_components:
        data = pca_second_view(data, cfg.pca_components)
    return data


def _train(method, data, cfg, seed=None):
    opt = cfg.optimizer(seed)
    if method in trainer.BASELINE_SELECTORS:
        return trainer.train_baseline(data, method, opt)
    if method == 'mvgp1':
        return trainer.train_mvgp1(data, cfg.grids, opt, cfg.cv_repeats, n_jobs=cfg.jobs)
    return trainer.train_mvgp2(data, cfg.grids, opt, cfg.cv_repeats, n_jobs=cfg.jobs)


def _out_dir(cfg, default):
    out = Path(cfg.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -------------------------------------------------------------------------

def cmd_train(cfg):
    if cfg.pca_components:
        raise ConfigError('train reads prepared view files; run pca-view first')
    if len(cfg.method) != 1:
        raise ConfigError('train takes exactly one --method')
    data = load_dataset(cfg)
    model = _train(cfg.method[0], data, cfg)
    out = _out_dir(cfg, 'mvgp-run')
    source = {'paths': [str(Path(p).resolve()) for p in cfg.views],
              'label_column': cfg.label_col,
              'content_hash': data.content_hash()}
    modelio.save_model(model, out / 'model.json', source)
    log = model.training_log.to_dict()
    log['selection'] = model.selection
    (out / 'training_log.json').write_text(modelio.dumps(log), encoding='utf-8')
    print('%s: final objective %.10g after %d iterations (%s)'
          % (model.method, model.training_log.final_objective,
             model.training_log.iterations, model.training_log.stop_reason))
    print('model written to %s' % (out / 'model.json'))
    return EXIT_OK


def cmd_evaluate(args):
    model = modelio.load_model(args.model)
    test = load_csv(args.views, args.label_col)
    means = trainer.predict_latent(model, test)
    combined = objective.combine(means, model.tradeoff)
    pred = objective.sign(combined)
    acc = float(np.mean(pred == test.labels))
    out = Path(args.out) if args.out else Path(args.model).with_name('predictions.csv')
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', newline='', encoding='utf-8') as fp:
        w = csv.writer(fp, lineterminator='\n')
        w.writerow(['index'] + ['latent_%d' % (k + 1) for k in range(len(means))]
                   + ['combined', 'predicted', 'true'])
        for i in range(test.n):
            w.writerow([i] + [repr(float(m[i])) for m in means]
                       + [repr(float(combined[i])), int(pred[i]), int(test.labels[i])])
    print('accuracy %.6f (%d/%d)' % (acc, int(np.sum(pred == test.labels)), test.n))
    return EXIT_OK


def summarize(accuracies):
    acc = np.asarray(accuracies, dtype=float)
    return float(np.mean(acc)), float(np.std(acc))


def format_row(name, mean, std):
    return '%-8s %6.2f±%.2f' % (name.upper(), 100.0 * mean, 100.0 * std)


def run_benchmark(cfg, data):
    """
    Repeat `cfg.repeats` times: stratified split (seed + r), train every
    requested method on the training part, score on the test part.
    Returns ``(report, timings)``.
    """
    methods = {m: {'accuracies': [], 'selected': []} for m in cfg.method}
    timings = []
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        train, test = split(data, SplitSpec(cfg.train_frac, seed, True))
        stage = {'repeat': r}
        for m in cfg.method:
            t0 = time.perf_counter()
            model = _train(m, train, cfg, seed)
            acc = trainer.accuracy(model, test)
            stage[m] = time.perf_counter() - t0
            methods[m]['accuracies'].append(acc)
            sel = model.selection or {}
            methods[m]['selected'].append({'a': sel.get('a'), 'b': sel.get('b')})
            logger.info('repeat %d %s accuracy %.4f (%.1fs)', r, m, acc, stage[m])
        timings.append(stage)
    for m, rec in methods.items():
        rec['mean'], rec['std'] = summarize(rec['accuracies'])
    report = {
        'report_version': REPORT_VERSION,
        'dataset': {'views': [str(p) for p in cfg.views], 'n': data.n,
                    'dims': list(data.dims), 'content_hash': data.content_hash()},
        'protocol': {'train_frac': cfg.train_frac, 'seed': cfg.seed,
                     'repeats': cfg.repeats, 'cv_repeats': cfg.cv_repeats,
                     'a_grid': list(cfg.a_grid), 'b_grid': list(cfg.b_grid),
                     'max_iters': cfg.max_iters, 'grad_tol': cfg.grad_tol,
                     'pca_components': cfg.pca_components},
        'methods': methods,
    }
    return report, timings


def cmd_benchmark(cfg):
    data = load_dataset(cfg)
    report, timings = run_benchmark(cfg, data)
    out = _out_dir(cfg, 'mvgp-benchmark')
    (out / 'report.json').write_text(modelio.dumps(report), encoding='utf-8')
    (out / 'timings.json').write_text(modelio.dumps(timings), encoding='utf-8')
    print('method   acc (%)')
    for m, rec in report['methods'].items():
        print(format_row(m, rec['mean'], rec['std']))
    return EXIT_OK


def cmd_gradcheck(args):
    dims = tuple(int(d) for d in str(args.dims).split(','))
    if args.n_points > 20 or args.n_points < 2:
        raise ConfigError('--n-points must be in [2, 20]')
    results = gradcheck.run_gradcheck(args.seeds, args.n_points, dims)
    return report_gradcheck(results, args.threshold)


def report_gradcheck(results, threshold=1e-4):
    print('seed      a          b   fd-rel-err  closed-form-rel-err')
    for r in results:
        print('%4d  %5.2f  %9.3g  %11.3e  %11.3e%s'
              % (r.seed, r.a, r.b, r.fd_error, r.closed_form_error,
                 '' if r.coupling_zero else '  coupling grad not exactly 0 at b=0'))
    worst_fd = max(r.fd_error for r in results)
    worst_cf = max(r.closed_form_error for r in results)
    print('max relative error: finite differences %.3e, closed form %.3e'
          % (worst_fd, worst_cf))
    ok = worst_fd < threshold and worst_cf < threshold and all(
        r.coupling_zero for r in results)
    print('PASS' if ok else 'FAIL')
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_pca_view(cfg, n_components):
    data = load_csv(cfg.views, cfg.label_col)
    two = pca_second_view(data, n_components)
    out = _out_dir(cfg, 'pca-views')
    paths = [out / 'view1.csv', out / 'view2.csv']
    save_csv(two, paths)
    print('wrote %s (%d dims) and %s (%d dims)'
          % (paths[0], two.dims[0], paths[1], two.dims[1]))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

def _add_common(p, with_method=True):
    p.add_argument('--config', help='JSON file with default values for any flag')
    p.add_argument('--views', nargs='+', help='one CSV file per view')
    p.add_argument('--label-col', dest='label_col', help="label column (default 'label')")
    p.add_argument('--seed', type=int)
    p.add_argument('--out')
    if with_method:
        p.add_argument('--method', help='comma-separated: ' + ','.join(METHODS))
        p.add_argument('--a-grid', dest='a_grid', help='comma-separated weights')
        p.add_argument('--b-grid', dest='b_grid',
                       help='comma-separated couplings, e.g. 2^-8,2,2^3')
        p.add_argument('--cv-repeats', dest='cv_repeats', type=int)
        p.add_argument('--max-iters', dest='max_iters', type=int)
        p.add_argument('--grad-tol', dest='grad_tol', type=float)
        p.add_argument('--jobs', type=int, help='concurrent grid cells')


def make_parser():
    parser = argparse.ArgumentParser(
        prog='mvgp', description='Multi-view GP classification with '
        'posterior-consistency regularization.')
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='fit one model and save it')
    _add_common(p)

    p = sub.add_parser('evaluate', help='score a saved model on test data')
    p.add_argument('--model', required=True)
    p.add_argument('--views', nargs='+', required=True)
    p.add_argument('--label-col', dest='label_col', default='label')
    p.add_argument('--out', help='predictions CSV (default: next to the model)')

    p = sub.add_parser('benchmark', help='repeated split/train/test protocol')
    _add_common(p)
    p.add_argument('--train-frac', dest='train_frac', type=float)
    p.add_argument('--repeats', type=int)
    p.add_argument('--pca-components', dest='pca_components', type=int,
                   help='synthesize a PCA second view for single-view data')
    p.add_argument('--fast', action='store_true',
                   help='coarse grids, %d validation repeats' % FAST_CV_REPEATS)

    p = sub.add_parser('gradcheck', help='finite-difference gradient check')
    p.add_argument('--seeds', type=int, default=20)
    p.add_argument('--n-points', dest='n_points', type=int, default=8)
    p.add_argument('--dims', default='3,4', help='comma-separated view dimensions')
    p.add_argument('--threshold', type=float, default=1e-4)

    p = sub.add_parser('pca-view', help='write a two-view dataset with a PCA view')
    _add_common(p, with_method=False)
    p.add_argument('--n-components', dest='n_components', type=int, required=True)
    return parser


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        if args.command == 'evaluate':
            return cmd_evaluate(args)
        if args.command == 'gradcheck':
            return cmd_gradcheck(args)
        cfg = build_config(args)
        if args.command == 'train':
            return cmd_train(cfg)
        if args.command == 'benchmark':
            return cmd_benchmark(cfg)
        return cmd_pca_view(cfg, args.n_components)
    except ConfigError as exc:
        print('error: %s' % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFormatError, OSError) as exc:
        print('error: %s' % exc, file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print('error: numerical failure: %s' % exc, file=sys.stderr)
        return EXIT_NUMERICAL
    except MvgpError as exc:
        print('error: %s' % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
