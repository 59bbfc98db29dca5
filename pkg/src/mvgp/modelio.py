"""
Model files: versioned JSON holding log-domain hyperparameters, trade-off
parameters, the consistent set and a reference (paths + content hash) to the
training data. Matrices themselves are not stored.
"""

import json
from pathlib import Path

from .dataset import load_csv
from .errors import DataError, ModelFormatError
from .gp_view import ViewHyperparams
from .objective import TradeoffParams
from .trainer import TrainedModel, TrainingLog, _apply_selector

__all__ = ['FORMAT_NAME', 'FORMAT_VERSION', 'model_to_dict', 'save_model',
           'load_model', 'dumps']

FORMAT_NAME = 'mvgp-model'
FORMAT_VERSION = 1


def dumps(obj):
    """Canonical JSON text (sorted keys, fixed indentation, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + '\n'


def model_to_dict(model, source):
    """
    `source` describes how to rebuild the raw training data: a dict with
    ``paths`` (one per view) and ``label_column``.
    """
    selection = model.selection or {}
    return {
        'format': FORMAT_NAME,
        'format_version': FORMAT_VERSION,
        'method': model.method,
        'view_selector': model.view_selector,
        'view_hps': [{'log_sf': hp.kernel.log_sf, 'log_l': hp.kernel.log_l,
                      'log_sigma': hp.log_sigma} for hp in model.view_hps],
        'tradeoff': model.tradeoff.to_dict(),
        'selected': {'a': selection.get('a'), 'b': selection.get('b')},
        'consistent_set': (None if model.consistent_set is None
                           else list(model.consistent_set)),
        'final_objective': model.training_log.final_objective,
        'train_data': {
            'paths': [str(p) for p in source['paths']],
            'label_column': source['label_column'],
            'content_hash': source['content_hash'],
            'n': model.train_data.n,
            'dims': list(model.train_data.dims),
        },
    }


def save_model(model, path, source):
    Path(path).write_text(dumps(model_to_dict(model, source)), encoding='utf-8')


def load_model(path, log_path=None):
    """Read a model file and re-load (and hash-check) its training data."""
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, ValueError) as exc:
        raise ModelFormatError('%s: unreadable model file: %s' % (path, exc)) from None
    if not isinstance(d, dict) or d.get('format') != FORMAT_NAME:
        raise ModelFormatError('%s: not a %s file' % (path, FORMAT_NAME))
    version = d.get('format_version')
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise ModelFormatError('%s: format version %r is newer than supported '
                               'version %d' % (path, version, FORMAT_VERSION))
    try:
        src = d['train_data']
        raw = load_csv(src['paths'], src['label_column'])
        if raw.content_hash() != src['content_hash']:
            raise DataError('%s: training data changed since the model was '
                            'written (content hash mismatch)' % path)
        data = _apply_selector(raw, d['view_selector'])
        hps = tuple(ViewHyperparams.from_vector([h['log_sf'], h['log_l'],
                                                 h['log_sigma']])
                    for h in d['view_hps'])
        tradeoff = TradeoffParams.from_dict(d['tradeoff'])
        T = d['consistent_set']
    except KeyError as exc:
        raise ModelFormatError('%s: missing field %s' % (path, exc)) from None
    log = TrainingLog(final_objective=d['final_objective'])
    if log_path is not None and Path(log_path).is_file():
        log = TrainingLog.from_dict(json.loads(Path(log_path).read_text()))
    return TrainedModel(d['method'], hps, tradeoff, data,
                        None if T is None else tuple(T), log,
                        d['view_selector'], d.get('selected'))
