"""
Training procedures: hyperparameter optimization, grid search over the
trade-off parameters with repeated validation splits, the consistent-set
pipeline, and single-view baselines.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gp_view, objective
from .dataset import MultiViewDataset, kfold_indices
from .errors import ConfigError, DataError, NumericalError
from .gp_view import ViewHyperparams
from .objective import ObjectiveState, TradeoffParams

__all__ = ['OptimizerConfig', 'TrainingLog', 'TrainedModel', 'GridResult',
           'init_hyperparams', 'optimize', 'grid_search', 'train_mvgp1',
           'train_mvgp2', 'build_consistent_set', 'train_baseline',
           'predict_latent', 'predict_labels', 'accuracy',
           'make_tradeoff', 'BASELINE_SELECTORS', 'DEFAULT_A_GRID',
           'DEFAULT_B_GRID']

logger = logging.getLogger(__name__)

DEFAULT_A_GRID = tuple(round(0.1 * i, 1) for i in range(11))
DEFAULT_B_GRID = (2.0 ** -18, 2.0 ** -12, 2.0 ** -8, 2.0, 2.0 ** 3, 2.0 ** 8)

# log-domain hyperparameters are kept inside this box
LOG_BOUND = 12.0


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    grad_tol: float = 1e-5
    objective_tol: float = 1e-9
    seed: int = 0
    memory: int = 10

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ConfigError('max_iters must be >= 1, got %r' % (self.max_iters,))
        if self.grad_tol < 0 or self.objective_tol < 0:
            raise ConfigError('tolerances must be non-negative')
        if int(self.seed) < 0:
            raise ConfigError('seed must be non-negative')
        if int(self.memory) < 0:
            raise ConfigError('memory must be non-negative')


@dataclass
class TrainingLog:
    iterations: int = 0
    final_objective: float = float('nan')
    final_grad_norm: float = float('nan')
    stop_reason: str = ''
    records: list = field(default_factory=list)
    jitter_events: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {'iterations': self.iterations,
                'final_objective': self.final_objective,
                'final_grad_norm': self.final_grad_norm,
                'stop_reason': self.stop_reason,
                'records': self.records,
                'jitter_events': self.jitter_events,
                'warnings': self.warnings}

    @classmethod
    def from_dict(cls, d):
        keys = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in keys})


@dataclass(eq=False)
class TrainedModel:
    """
    Optimized hyperparameters together with everything needed to predict.

    `view_selector` is None for multi-view models, otherwise one of
    ``'view1'``, ``'view2'``, ... or ``'concat'`` and says how raw data is
    mapped onto the single view the baseline was trained on.
    """
    method: str
    view_hps: tuple
    tradeoff: TradeoffParams
    train_data: MultiViewDataset
    consistent_set: tuple = None
    training_log: TrainingLog = None
    view_selector: str = None
    selection: dict = None

    def state(self):
        """Objective state the final fit optimized (empty or full T means none)."""
        T = self.consistent_set
        if T is not None and (len(T) == 0 or len(T) == self.train_data.n):
            T = None
        return ObjectiveState(self.view_hps, self.tradeoff, T)


@dataclass
class GridResult:
    tradeoff: TradeoffParams
    a: object
    b: float
    table: list
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {'a': _jsonable(self.a), 'b': self.b, 'table': self.table,
                'warnings': self.warnings}


def _jsonable(a):
    return list(a) if isinstance(a, (tuple, list, np.ndarray)) else float(a)


# -- optimization -----------------------------------------------------------------

def init_hyperparams(n_views, seed):
    """Log-domain hyperparameters drawn uniformly from [-1, 1]."""
    rng = np.random.default_rng(int(seed))
    draws = rng.uniform(-1.0, 1.0, size=(n_views, 3))
    return tuple(ViewHyperparams.from_vector(r) for r in draws)


def _safe_value_and_grad(state, data):
    try:
        f, g = objective.value_and_grad(state, data)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError):
        return math.inf, None
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        return math.inf, None
    return f, g


def _lbfgs_direction(g, s_list, y_list):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((rho, a))
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_list, y_list), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _jitter_report(state, data):
    events = []
    for k, (hp, X) in enumerate(zip(state.view_hps, data.views)):
        try:
            p = gp_view.posterior(hp, X, data.labels)
        except NumericalError:
            events.append({'view': k, 'solve_jitter': None, 'cov_jitter': None})
            continue
        if p.solve_jitter or p.jitter:
            events.append({'view': k, 'solve_jitter': p.solve_jitter,
                           'cov_jitter': p.jitter})
    return events


def optimize(state, data, config):
    """
    Minimize the objective over the view hyperparameters of `state`.

    Search directions come from a limited-memory quasi-Newton recursion on
    the gradient (falling back to steepest descent), and every step passes a
    backtracking sufficient-decrease test, so the objective never increases
    between accepted iterates. Trade-off parameters are left untouched.

    Returns ``(state, TrainingLog)``.
    """
    if not isinstance(config, OptimizerConfig):
        raise ConfigError('config must be an OptimizerConfig')
    x = state.to_vector()
    f, g = _safe_value_and_grad(state, data)
    if g is None:
        raise NumericalError('objective is not finite at the initial point')
    log = TrainingLog()
    log.records.append({'iteration': 0, 'objective': f,
                        'grad_norm': float(np.max(np.abs(g))), 'step': 0.0})
    s_list, y_list = [], []
    reason = 'max_iters'
    for it in range(1, int(config.max_iters) + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= config.grad_tol:
            reason = 'grad_tol'
            break
        accepted = None
        for use_memory in ((True, False) if s_list else (False,)):
            if use_memory:
                d = _lbfgs_direction(g, s_list, y_list)
                t = 1.0
            else:
                d = -g
                t = min(1.0, 1.0 / gnorm)
            slope = g @ d
            if not slope < 0:
                continue
            # cap the largest coordinate move so exp() stays well-behaved
            t = min(t, 2.0 / np.max(np.abs(d)))
            for _ in range(40):
                x_new = np.clip(x + t * d, -LOG_BOUND, LOG_BOUND)
                f_new, g_new = _safe_value_and_grad(state.with_vector(x_new), data)
                if f_new <= f + 1e-4 * (g @ (x_new - x)) and f_new <= f:
                    accepted = (x_new, f_new, g_new, t)
                    break
                t *= 0.5
            if accepted is not None:
                break
            s_list, y_list = [], []
        if accepted is None:
            reason = 'line_search'
            break
        x_new, f_new, g_new, t = accepted
        s, yv = x_new - x, g_new - g
        if s @ yv > 1e-12 * (s @ s):
            s_list.append(s)
            y_list.append(yv)
            if len(s_list) > config.memory:
                s_list.pop(0)
                y_list.pop(0)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        log.iterations = it
        log.records.append({'iteration': it, 'objective': f,
                            'grad_norm': float(np.max(np.abs(g))), 'step': float(t)})
        if decrease <= config.objective_tol * max(abs(f), 1.0):
            reason = 'objective_tol'
            break
    else:
        if float(np.max(np.abs(g))) <= config.grad_tol:
            reason = 'grad_tol'
    final = state.with_vector(x)
    log.final_objective = float(f)
    log.final_grad_norm = float(np.max(np.abs(g)))
    log.stop_reason = reason
    log.jitter_events = _jitter_report(final, data)
    return final, log


# -- grids -------------------------------------------------------------------------

def make_tradeoff(a, b, n_views):
    """
    Trade-off parameters for one grid cell. `a` is the first view's weight
    (two views) or a full weight vector; `b` couples every pair of views.
    """
    if np.ndim(a) == 0:
        if n_views == 1:
            weights = (1.0,)
        elif n_views == 2:
            weights = (float(a), 1.0 - float(a))
        else:
            raise ConfigError('a scalar view weight needs exactly two views; '
                              'give a weight vector for %d views' % n_views)
    else:
        weights = tuple(float(w) for w in a)
        if len(weights) != n_views:
            raise ConfigError('weight vector of length %d for %d views'
                              % (len(weights), n_views))
    return TradeoffParams.uniform_coupling(weights, float(b))


def _tie_key(a, b, n_views):
    if np.ndim(a) == 0:
        dist = abs(float(a) - 0.5)
        first = float(a)
    else:
        dist = float(np.sum(np.abs(np.asarray(a) - 1.0 / n_views)))
        first = tuple(a)
    return (b, dist, first)


def _local_coupling_set(consistent_set, rows):
    """Positions within `rows` of the members of `consistent_set`."""
    if consistent_set is None:
        return None
    local = tuple(int(i) for i in np.flatnonzero(np.isin(rows, consistent_set)))
    if len(local) == len(rows):
        return None
    return local


def _fit_and_score(data, train_rows, val_rows, tradeoff, coupling_set, config):
    part = data.subset(train_rows)
    local = _local_coupling_set(coupling_set, train_rows)
    warn = None
    if local is not None and len(local) == 0:
        tradeoff = TradeoffParams(tradeoff.weights, np.zeros_like(tradeoff.couplings))
        local = None
        warn = 'empty coupling set on a validation split; coupling dropped'
    state = ObjectiveState(init_hyperparams(data.n_views, config.seed), tradeoff, local)
    state, _ = optimize(state, part, config)
    model = TrainedModel('cell', state.view_hps, tradeoff, part)
    return accuracy(model, data.subset(val_rows)), warn


def grid_search(data_train, grids=(DEFAULT_A_GRID, DEFAULT_B_GRID), config=None,
                repeats=10, consistent_set=None, n_jobs=1):
    """
    Choose trade-off parameters by validation accuracy.

    For each of `repeats` random train/validation splits and each (a, b)
    cell, the hyperparameters are optimized on the training part from the
    seeded initial point and the hybrid predictor is scored on the
    validation part. The cell with the highest mean accuracy wins; ties go
    to the smaller b, then to the a closest to 0.5 (closest to uniform for
    weight vectors), then to the smaller a.

    `consistent_set`, when given, restricts the coupling to those indices of
    `data_train` (intersected with each training part). An empty tuple drops
    the coupling altogether.
    """
    config = config or OptimizerConfig()
    a_values, b_values = [list(g) for g in grids]
    if not a_values or not b_values:
        raise ConfigError('grids must be non-empty')
    if int(repeats) < 1:
        raise ConfigError('repeats must be >= 1')
    if any(b < 0 for b in b_values):
        raise ConfigError('coupling values must be non-negative')
    n = data_train.n
    splits = kfold_indices(n, max(int(repeats), 2), config.seed)[:int(repeats)]
    for _, val in splits:
        if len(val) == 0:
            raise DataError('empty validation part')
    drop = consistent_set is not None and len(consistent_set) == 0
    coupling = None if drop else consistent_set

    cells = [(a, b) for a in a_values for b in b_values]
    jobs = []
    for a, b in cells:
        tradeoff = make_tradeoff(a, 0.0 if drop else b, data_train.n_views)
        for train_rows, val_rows in splits:
            jobs.append((train_rows, val_rows, tradeoff))

    def run(job):
        return _fit_and_score(data_train, job[0], job[1], job[2], coupling, config)

    if n_jobs == 1:
        results = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, jobs))

    warnings = sorted({w for _, w in results if w})
    if drop:
        warnings.insert(0, 'empty consistent set; coupling dropped')
    table = []
    r = len(splits)
    for c, (a, b) in enumerate(cells):
        accs = [acc for acc, _ in results[c * r:(c + 1) * r]]
        table.append({'a': _jsonable(a), 'b': float(b), 'accuracies': accs,
                      'mean_accuracy': float(np.mean(accs))})
    best = min(range(len(cells)),
               key=lambda c: (-table[c]['mean_accuracy'],)
               + _tie_key(cells[c][0], cells[c][1], data_train.n_views))
    a, b = cells[best]
    return GridResult(make_tradeoff(a, 0.0 if drop else b, data_train.n_views),
                      a, float(b), table, warnings)


# -- pipelines ---------------------------------------------------------------------

def _final_fit(method, data_train, grid, config, consistent_set):
    state = ObjectiveState(init_hyperparams(data_train.n_views, config.seed),
                           grid.tradeoff, consistent_set)
    state, log = optimize(state, data_train, config)
    log.warnings.extend(grid.warnings)
    return TrainedModel(method, state.view_hps, grid.tradeoff, data_train,
                        consistent_set, log, selection=grid.to_dict())


def train_mvgp1(data_train, grids=(DEFAULT_A_GRID, DEFAULT_B_GRID), config=None,
                repeats=10, n_jobs=1):
    """Grid search for (a, b), then a final fit on the whole training set."""
    config = config or OptimizerConfig()
    if data_train.n_views < 2:
        raise DataError('multi-view training requires >= 2 views')
    grid = grid_search(data_train, grids, config, repeats, n_jobs=n_jobs)
    return _final_fit('mvgp1', data_train, grid, config, None)


def build_consistent_set(model, data_train):
    """
    Indices of training examples on which every view's own prediction
    (sign of its predictive mean) agrees with the true label.
    """
    means = predict_latent(model, data_train)
    y = data_train.labels
    agree = np.ones(y.shape[0], dtype=bool)
    for m in means:
        agree &= objective.sign(m) == y
    return tuple(int(i) for i in np.flatnonzero(agree))


def train_mvgp2(data_train, grids=(DEFAULT_A_GRID, DEFAULT_B_GRID), config=None,
                repeats=10, consistent_set=None, n_jobs=1):
    """
    Fit MvGP1, keep the training points every view classifies correctly,
    and redo the grid search and final fit with the coupling restricted to
    them. Passing `consistent_set` skips the first stage.

    An empty consistent set drops the coupling (plain weighted single-view
    fits) and records a warning in the training log.
    """
    config = config or OptimizerConfig()
    if data_train.n_views < 2:
        raise DataError('multi-view training requires >= 2 views')
    if consistent_set is None:
        first = train_mvgp1(data_train, grids, config, repeats, n_jobs=n_jobs)
        consistent_set = build_consistent_set(first, data_train)
    consistent_set = tuple(sorted(set(int(i) for i in consistent_set)))
    if consistent_set and (consistent_set[0] < 0 or consistent_set[-1] >= data_train.n):
        raise DataError('consistent set index out of range')
    grid = grid_search(data_train, grids, config, repeats,
                       consistent_set=consistent_set, n_jobs=n_jobs)
    if not consistent_set:
        final_set = None
    elif len(consistent_set) == data_train.n:
        final_set = None
    else:
        final_set = consistent_set
    model = _final_fit('mvgp2', data_train, grid, config, final_set)
    model.consistent_set = consistent_set
    return model


BASELINE_SELECTORS = {'gp1': 'view1', 'gp2': 'view2', 'gp3': 'concat'}


def _apply_selector(data, selector):
    if selector is None:
        return data
    if selector == 'concat':
        return data.concatenated()
    if selector.startswith('view'):
        k = int(selector[4:]) - 1
        if not 0 <= k < data.n_views:
            raise DataError('%s requested but the data has %d views'
                            % (selector, data.n_views))
        return data.select_views([k])
    raise ConfigError('unknown view selector %r' % (selector,))


def train_baseline(data_train, view_selector, config=None):
    """
    Single-view GP fitted by minimizing its NLL. `view_selector` is
    ``'view1'``, ``'view2'``, ... or ``'concat'`` (column-concatenation of
    all views).
    """
    config = config or OptimizerConfig()
    view_selector = BASELINE_SELECTORS.get(view_selector, view_selector)
    data = _apply_selector(data_train, view_selector)
    tradeoff = TradeoffParams((1.0,), [[0.0]])
    state = ObjectiveState(init_hyperparams(1, config.seed), tradeoff)
    state, log = optimize(state, data, config)
    method = {v: k for k, v in BASELINE_SELECTORS.items()}.get(view_selector,
                                                              view_selector)
    return TrainedModel(method, state.view_hps, tradeoff, data, None, log,
                        view_selector)


# -- prediction ----------------------------------------------------------------------

def predict_latent(model, data):
    """Per-view predictive means of `model` at the examples of `data`."""
    data = _apply_selector(data, model.view_selector)
    train = model.train_data
    if data.n_views != train.n_views:
        raise DataError('model has %d views, data has %d'
                        % (train.n_views, data.n_views))
    if data.dims != train.dims:
        raise DataError('feature dimensions %s do not match the model %s'
                        % (data.dims, train.dims))
    return [gp_view.predict(hp, X, train.labels, Xs).mean
            for hp, X, Xs in zip(model.view_hps, train.views, data.views)]


def predict_labels(model, data):
    return objective.hybrid_predict(predict_latent(model, data), model.tradeoff)


def accuracy(model, data):
    if data.n == 0:
        raise DataError('cannot score an empty dataset')
    return float(np.mean(predict_labels(model, data) == data.labels))

