"""
Squared-exponential covariance function.

Hyperparameters live in the log domain: ``log_sf`` is the log of the signal
standard deviation and ``log_l`` the log of the (single, isotropic)
length-scale, so that::

    k(x, x') = sf**2 * exp(-|x - x'|**2 / (2 * l**2))
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ['KernelParams', 'sq_dist', 'gram', 'cross_gram', 'gram_grad']


@dataclass(frozen=True)
class KernelParams:
    log_sf: float
    log_l: float

    def __post_init__(self):
        if not (np.isfinite(self.log_sf) and np.isfinite(self.log_l)):
            raise ValueError('kernel hyperparameters must be finite')

    @property
    def sf2(self):
        """Signal variance."""
        return float(np.exp(2.0 * self.log_sf))

    @property
    def ell(self):
        """Length-scale."""
        return float(np.exp(self.log_l))


def _as_matrix(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError('expected a 2-d feature matrix, got ndim=%d' % X.ndim)
    return X


def sq_dist(X, Y=None):
    """
    Matrix of squared Euclidean distances between the rows of `X` and `Y`.

    Differences are formed explicitly, so duplicate rows give exactly zero.
    """
    X = _as_matrix(X)
    Y = X if Y is None else _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError('feature dimension mismatch: %d vs %d'
                         % (X.shape[1], Y.shape[1]))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return np.zeros((X.shape[0], Y.shape[0]))
    return cdist(X, Y, 'sqeuclidean')


def gram_from_sq_dist(params, D2):
    # exp underflows to exactly 0 for very distant points, which is intended
    return params.sf2 * np.exp(-0.5 * D2 / params.ell ** 2)


def gram(params, X):
    """N x N covariance matrix of the rows of `X`."""
    return gram_from_sq_dist(params, sq_dist(X))


def cross_gram(params, X, Xstar):
    """N x P cross-covariance between rows of `X` and rows of `Xstar`."""
    return gram_from_sq_dist(params, sq_dist(X, Xstar))


def gram_grad(params, X, D2=None):
    """
    Derivatives of the Gram matrix with respect to the log-domain kernel
    hyperparameters.

    Returns
    -------
    (dK_dlog_sf, dK_dlog_l) : pair of N x N arrays
    """
    if D2 is None:
        D2 = sq_dist(X)
    K = gram_from_sq_dist(params, D2)
    return 2.0 * K, K * (D2 / params.ell ** 2)
