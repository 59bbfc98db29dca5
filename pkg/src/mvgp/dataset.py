"""
Multi-view classification data: loading, validation, PCA view synthesis,
train/test splitting and repeated validation splits.

On disk a dataset is one CSV file per view with a shared row order. The
label column lives in the first file only. Labels may be encoded as
{+1, -1}, {1, 0} or {1, 2}; 0 and 2 are mapped to -1.
"""

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ['MultiViewDataset', 'SplitSpec', 'load_csv', 'save_csv',
           'pca_second_view', 'split', 'split_indices', 'kfold_indices',
           'make_synthetic', 'VALIDATION_FRACTION']

VALIDATION_FRACTION = 0.2


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MultiViewDataset:
    """
    Aligned feature matrices, one per view, with shared labels in {+1, -1}.

    Arrays are copied on construction and marked read-only.
    """
    views: tuple
    labels: np.ndarray
    view_names: tuple = None

    def __post_init__(self):
        views = tuple(_frozen(v) for v in self.views)
        labels = _frozen(np.asarray(self.labels, dtype=float).ravel())
        if not views:
            raise DataError('a dataset needs at least one view')
        names = self.view_names
        if names is None:
            names = tuple('view%d' % (k + 1) for k in range(len(views)))
        names = tuple(str(s) for s in names)
        if len(names) != len(views):
            raise DataError('%d view names for %d views'
                            % (len(names), len(views)))
        n = labels.shape[0]
        if n < 1:
            raise DataError('a dataset needs at least one example')
        for name, v in zip(names, views):
            if v.ndim != 2:
                raise DataError('view %r is not a 2-d matrix' % name)
            if v.shape[0] != n:
                raise DataError('view %r has %d rows, expected %d'
                                % (name, v.shape[0], n))
            if not np.all(np.isfinite(v)):
                raise DataError('view %r has non-finite features' % name)
        if not np.all(np.abs(labels) == 1.0):
            raise DataError('labels must be +1 or -1')
        object.__setattr__(self, 'views', views)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'view_names', names)

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def dims(self):
        return tuple(v.shape[1] for v in self.views)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return MultiViewDataset(tuple(v[idx] for v in self.views),
                                self.labels[idx], self.view_names)

    def select_views(self, which):
        which = list(which)
        return MultiViewDataset(tuple(self.views[k] for k in which),
                                self.labels,
                                tuple(self.view_names[k] for k in which))

    def concatenated(self):
        """Single-view dataset holding the column-concatenation of all views."""
        if self.n_views < 2:
            raise DataError('concatenation requires >= 2 views')
        return MultiViewDataset((np.hstack(self.views),), self.labels,
                                ('+'.join(self.view_names),))

    def content_hash(self):
        """SHA-256 over the raw bytes of every matrix and the labels."""
        h = hashlib.sha256()
        for v in self.views:
            h.update(np.asarray(v.shape, dtype=np.int64).tobytes())
            h.update(np.ascontiguousarray(v, dtype='<f8').tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype='<f8').tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError('train_fraction must lie in (0, 1), got %r'
                             % (self.train_fraction,))
        if int(self.seed) < 0:
            raise ValueError('seed must be non-negative')


# -- CSV i/o -----------------------------------------------------------------

def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_rows(path):
    """Rows of a CSV file as (line_number, cells), skipping blank lines."""
    path = Path(path)
    if not path.is_file():
        raise DataError('%s: no such file' % path)
    rows = []
    with open(path, newline='', encoding='utf-8') as fp:
        reader = csv.reader(fp)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((reader.line_num, [c.strip() for c in row]))
    if rows and not all(_is_number(c) for c in rows[0][1]):
        header, rows = rows[0][1], rows[1:]
    else:
        header = None
    return header, rows


def _map_labels(raw, path, lines):
    values = []
    for s, line in zip(raw, lines):
        try:
            values.append(float(s))
        except ValueError:
            raise DataError('%s:%d: non-numeric label %r' % (path, line, s)) from None
    values = np.array(values)
    present = set(values.tolist())
    for encoding in ({1.0, -1.0}, {1.0, 0.0}, {1.0, 2.0}):
        if present <= encoding:
            return np.where(values == 1.0, 1.0, -1.0)
    allowed = {1.0, -1.0, 0.0, 2.0}
    bad = next((i for i, v in enumerate(values) if v not in allowed), None)
    if bad is None:
        raise DataError('%s: mixed label encodings %s; expected one of '
                        '{+1,-1}, {1,0}, {1,2}' % (path, sorted(present)))
    raise DataError('%s:%d: unknown label %r' % (path, lines[bad], raw[bad]))


def _parse_features(rows, path, columns):
    out = np.empty((len(rows), len(columns)))
    for i, (line, cells) in enumerate(rows):
        for j, c in enumerate(columns):
            try:
                x = float(cells[c])
            except ValueError:
                raise DataError('%s:%d: non-numeric feature %r in column %d'
                                % (path, line, cells[c], c + 1)) from None
            if not math.isfinite(x):
                raise DataError('%s:%d: non-finite feature %r in column %d'
                                % (path, line, cells[c], c + 1))
            out[i, j] = x
    return out


def load_csv(paths, label_column='label', view_names=None):
    """
    Load a multi-view dataset from one CSV file per view.

    Parameters
    ----------
    paths : sequence of paths
        One file per view; rows are aligned across files.
    label_column : str or int
        Name (requires a header) or zero-based index of the label column in
        the first file.
    view_names : sequence of str, optional
        Defaults to the file stems.
    """
    paths = [Path(p) for p in paths]
    if not paths:
        raise DataError('no view files given')
    views, labels = [], None
    n_rows = None
    for k, path in enumerate(paths):
        header, rows = _read_rows(path)
        if not rows:
            raise DataError('%s: no data rows' % path)
        width = len(header) if header is not None else len(rows[0][1])
        for line, cells in rows:
            if len(cells) != width:
                raise DataError('%s:%d: expected %d columns, found %d'
                                % (path, line, width, len(cells)))
        if n_rows is None:
            n_rows = len(rows)
        elif len(rows) != n_rows:
            raise DataError('%s: %d data rows, but %s has %d (row-count mismatch)'
                            % (path, len(rows), paths[0], n_rows))
        columns = list(range(width))
        if k == 0:
            if isinstance(label_column, str) and not label_column.lstrip('-').isdigit():
                if header is None or label_column not in header:
                    raise DataError('%s: no label column named %r'
                                    % (path, label_column))
                lc = header.index(label_column)
            else:
                lc = int(label_column)
                if lc < 0:
                    lc += width
                if not 0 <= lc < width:
                    raise DataError('%s: label column %s out of range'
                                    % (path, label_column))
            columns.remove(lc)
            labels = _map_labels([cells[lc] for _, cells in rows], path,
                                 [line for line, _ in rows])
        views.append(_parse_features(rows, path, columns))
    if view_names is None:
        view_names = [p.stem for p in paths]
    return MultiViewDataset(tuple(views), labels, tuple(view_names))


def save_csv(dataset, paths, label_column='label'):
    """
    Write `dataset` in the format read by `load_csv`.

    Floats are written with ``repr`` so that reloading is bit-exact.
    """
    paths = [Path(p) for p in paths]
    if len(paths) != dataset.n_views:
        raise DataError('%d paths for %d views' % (len(paths), dataset.n_views))
    for k, (path, X) in enumerate(zip(paths, dataset.views)):
        header = ['x%d' % (j + 1) for j in range(X.shape[1])]
        if k == 0:
            header.append(label_column)
        with open(path, 'w', newline='', encoding='utf-8') as fp:
            w = csv.writer(fp, lineterminator='\n')
            w.writerow(header)
            for i in range(dataset.n):
                row = [repr(float(x)) for x in X[i]]
                if k == 0:
                    row.append('1' if dataset.labels[i] > 0 else '-1')
                w.writerow(row)


# -- PCA ----------------------------------------------------------------------

def principal_directions(X):
    """
    Eigenvalues and eigenvectors of the sample covariance of `X`, sorted by
    descending eigenvalue, with each eigenvector's largest-magnitude entry
    made positive.
    """
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    denom = max(X.shape[0] - 1, 1)
    S = Xc.T @ Xc / denom
    evals, evecs = np.linalg.eigh(S)
    order = np.argsort(evals, kind='stable')[::-1]
    evals, evecs = evals[order], evecs[:, order]
    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    return evals, evecs * signs


def pca_second_view(dataset, n_components):
    """
    Turn a single-view dataset into a two-view one whose second view is the
    centered data projected onto its top `n_components` principal directions.
    """
    if dataset.n_views != 1:
        raise DataError('PCA view synthesis needs exactly one view, got %d'
                        % dataset.n_views)
    X = dataset.views[0]
    n_components = int(n_components)
    if not 1 <= n_components <= min(X.shape):
        raise DataError('n_components must be in [1, %d], got %d'
                        % (min(X.shape), n_components))
    _, W = principal_directions(X)
    Z = (X - X.mean(axis=0)) @ W[:, :n_components]
    return MultiViewDataset((X, Z), dataset.labels,
                            (dataset.view_names[0], 'pca%d' % n_components))


# -- splitting ----------------------------------------------------------------

def _round_half_up(x):
    return int(math.floor(x + 0.5))


def stratified_counts(class_sizes, fraction):
    """
    Per-class train counts for a stratified split: floor of each ideal share,
    with the leftover (total target minus floors) handed to the classes with
    the largest fractional parts; ties go to the class listed first.
    """
    sizes = list(class_sizes)
    total = _round_half_up(fraction * sum(sizes))
    ideal = [fraction * s for s in sizes]
    counts = [int(math.floor(v)) for v in ideal]
    rest = total - sum(counts)
    order = sorted(range(len(sizes)), key=lambda i: (-(ideal[i] - counts[i]), i))
    for i in order[:max(rest, 0)]:
        counts[i] += 1
    return counts


def split_indices(labels, spec):
    """Index form of `split`: sorted ``(train_idx, test_idx)``."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    rng = np.random.default_rng(int(spec.seed))
    if spec.stratified:
        classes = [1.0, -1.0]
        members = [np.flatnonzero(labels == c) for c in classes]
        counts = stratified_counts([len(m) for m in members], spec.train_fraction)
        train = []
        for c, m, k in zip(classes, members, counts):
            if len(m) == 0:
                continue
            if k == 0 or k == len(m):
                raise DataError('stratified split leaves class %+d empty in '
                                'one part (%d of %d in train)' % (c, k, len(m)))
            train.append(rng.permutation(m)[:k])
        train = np.concatenate(train)
    else:
        k = _round_half_up(spec.train_fraction * n)
        train = rng.permutation(n)[:k]
    train = np.sort(train)
    test = np.setdiff1d(np.arange(n), train)
    if len(train) == 0 or len(test) == 0:
        raise DataError('split of %d examples at fraction %g leaves an empty part'
                        % (n, spec.train_fraction))
    return train, test


def split(dataset, spec):
    """Deterministic (optionally stratified) train/test partition."""
    train, test = split_indices(dataset.labels, spec)
    return dataset.subset(train), dataset.subset(test)


def kfold_indices(n, k, seed):
    """
    `k` random train/validation partitions of ``range(n)``.

    Each validation part holds round(0.2 n) indices (at least one, at most
    n - 1) drawn afresh, so validation parts of different pairs may overlap.
    """
    n, k = int(n), int(k)
    if k < 2:
        raise ValueError('need k >= 2, got %d' % k)
    if n < k:
        raise ValueError('need n >= k, got n=%d, k=%d' % (n, k))
    n_val = min(max(_round_half_up(VALIDATION_FRACTION * n), 1), n - 1)
    rng = np.random.default_rng(int(seed))
    pairs = []
    for _ in range(k):
        perm = rng.permutation(n)
        pairs.append((np.sort(perm[n_val:]), np.sort(perm[:n_val])))
    return pairs


# -- synthetic data -------------------------------------------------------------

def make_synthetic(n=120, dims=(5, 5), noise=1.0, flip_fraction=0.0,
                   flip_view=1, seed=0):
    """
    Two-or-more-view data where each view is ``y * w_k + noise``.

    Each view gets its own unit direction ``w_k`` and independent isotropic
    Gaussian noise with standard deviation `noise`; the Bayes rule for view
    k alone is ``sign(w_k . x)``. With `flip_fraction` > 0, that share of the
    rows of view `flip_view` (zero-based) is generated from the opposite
    label, i.e. carries label-flipping noise.
    """
    rng = np.random.default_rng(int(seed))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    # guarantee both classes are present
    y[0], y[1] = 1.0, -1.0
    n_flip = _round_half_up(flip_fraction * n)
    flipped = np.sort(rng.permutation(n)[:n_flip])
    views = []
    for k, d in enumerate(dims):
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        target = y.copy()
        if k == flip_view and n_flip:
            target[flipped] = -target[flipped]
        views.append(np.outer(target, w) + noise * rng.standard_normal((n, d)))
    return MultiViewDataset(tuple(views), y)
