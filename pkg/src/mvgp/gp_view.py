"""
Exact GP regression on a single view, with labels in {+1, -1} used directly
as regression targets.

All linear algebra goes through a Cholesky factor of ``C = K + sigma^2 I``
(see `mvgp._linalg.jitter_cholesky`); no explicit determinant is ever formed.
Gradients are reported in the log domain, in the order
``(log_sf, log_l, log_sigma)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _linalg as la
from .kernel import KernelParams, gram_from_sq_dist, gram_grad, sq_dist

__all__ = ['ViewHyperparams', 'GaussianPosterior', 'PredictiveGaussian',
           'nll', 'nll_grad', 'posterior', 'posterior_grad', 'posterior_vjp',
           'predict', 'HP_NAMES']

HP_NAMES = ('log_sf', 'log_l', 'log_sigma')
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ViewHyperparams:
    kernel: KernelParams
    log_sigma: float

    def __post_init__(self):
        if not np.isfinite(self.log_sigma):
            raise ValueError('log_sigma must be finite')

    @classmethod
    def from_vector(cls, v):
        v = [float(x) for x in v]
        if len(v) != 3:
            raise ValueError('expected 3 log-domain values, got %d' % len(v))
        return cls(KernelParams(v[0], v[1]), v[2])

    def to_vector(self):
        return np.array([self.kernel.log_sf, self.kernel.log_l, self.log_sigma])

    @property
    def noise_var(self):
        return float(np.exp(2.0 * self.log_sigma))


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    """
    Gaussian over latent function values.

    `jitter` is the amount added to the diagonal of `cov` to make it
    positive definite; `solve_jitter` the amount added to ``K + sigma^2 I``
    before it was factorized.
    """
    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0
    solve_jitter: float = 0.0
    chol: np.ndarray = None  # lower factor of cov, if already computed

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class PredictiveGaussian:
    mean: np.ndarray
    var: np.ndarray


class _Factor:
    """Per-call factorization of one view's training covariance."""

    def __init__(self, hp, X, D2=None):
        self.D2 = sq_dist(X) if D2 is None else D2
        self.K = gram_from_sq_dist(hp.kernel, self.D2)
        n = self.K.shape[0]
        self.s = hp.noise_var
        self.L, self.jitter = la.jitter_cholesky(self.K + self.s * np.eye(n))
        # total diagonal actually added to K
        self.s_eff = self.s + self.jitter
        self._inv = None

    def solve(self, b):
        return la.cho_solve(self.L, b)

    def inverse(self):
        if self._inv is None:
            self._inv = la.cho_inverse(self.L)
        return self._inv


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError('X has %d rows but y has %d entries'
                         % (X.shape[0], y.shape[0]))
    if X.shape[0] < 1:
        raise ValueError('at least one training point is required')
    return X, y


def nll(hp, X, y):
    """Negative log marginal likelihood of `y` under the view GP."""
    X, y = _check_xy(X, y)
    f = _Factor(hp, X)
    alpha = f.solve(y)
    n = y.shape[0]
    return float(0.5 * y @ alpha + 0.5 * la.logdet(f.L) + 0.5 * n * LOG_2PI)


def _dC_list(hp, f):
    dK_sf, dK_l = gram_grad(hp.kernel, None, D2=f.D2)
    n = f.K.shape[0]
    return [dK_sf, dK_l, 2.0 * f.s * np.eye(n)]


def nll_grad_terms(hp, X, y):
    """
    The two parts of the NLL gradient, ``-1/2 a^T dC a`` and
    ``1/2 tr(C^-1 dC)`` with ``a = C^-1 y``, each as a length-3 array.
    """
    X, y = _check_xy(X, y)
    f = _Factor(hp, X)
    alpha = f.solve(y)
    Cinv = f.inverse()
    quad = np.array([-0.5 * alpha @ dC @ alpha for dC in _dC_list(hp, f)])
    trace = np.array([0.5 * np.sum(Cinv * dC) for dC in _dC_list(hp, f)])
    return quad, trace


def nll_grad(hp, X, y):
    """Gradient of `nll` over ``(log_sf, log_l, log_sigma)``."""
    X, y = _check_xy(X, y)
    f = _Factor(hp, X)
    alpha = f.solve(y)
    Q = f.inverse() - np.outer(alpha, alpha)
    return np.array([0.5 * np.sum(Q * dC) for dC in _dC_list(hp, f)])


def _posterior_from_factor(f, y):
    mean = f.K @ f.solve(y)
    V = sla.solve_triangular(f.L, f.K, lower=True, check_finite=False)
    cov = la.symmetrize(f.K - V.T @ V)
    L, jitter = la.jitter_cholesky(cov)
    if jitter:
        cov = cov + jitter * np.eye(cov.shape[0])
    return GaussianPosterior(mean, cov, jitter, f.jitter, L)


def posterior(hp, X, y):
    """
    Posterior over the latent function at the training inputs:
    mean ``K C^-1 y`` and covariance ``K - K C^-1 K``.
    """
    X, y = _check_xy(X, y)
    return _posterior_from_factor(_Factor(hp, X), y)


def posterior_grad(hp, X, y):
    """
    Derivatives of the posterior mean and covariance.

    Returns a list of three ``(dmean, dcov)`` pairs, one per hyperparameter
    in `HP_NAMES` order. This materializes every derivative and is meant for
    inspection and testing; `posterior_vjp` is what the objective uses.
    """
    X, y = _check_xy(X, y)
    f = _Factor(hp, X)
    K = f.K
    alpha = f.solve(y)
    KA = f.solve(K).T  # K C^-1
    n = K.shape[0]
    dK_sf, dK_l = gram_grad(hp.kernel, None, D2=f.D2)
    pairs = []
    for dK, dC in ((dK_sf, dK_sf), (dK_l, dK_l),
                   (np.zeros((n, n)), 2.0 * f.s * np.eye(n))):
        dmean = dK @ alpha - KA @ (dC @ alpha)
        dcov = dK - dK @ KA.T - KA @ dK + KA @ dC @ KA.T
        pairs.append((dmean, la.symmetrize(dcov)))
    return pairs


def posterior_vjp(hp, X, y, g_mean, g_cov):
    """
    Contract the posterior derivatives against a mean gradient `g_mean`
    (length N) and a symmetric covariance gradient `g_cov` (N x N).

    Returns the length-3 array with entries
    ``g_mean . dmean/dtheta + tr(g_cov dcov/dtheta)``.

    Uses ``I - K C^-1 = s C^-1`` (s the total diagonal added to K), which
    turns the kernel-parameter derivatives into ``s C^-1 dK C^-1 y`` and
    ``s^2 C^-1 dK C^-1``, so only elementwise products with dK remain.
    """
    X, y = _check_xy(X, y)
    f = _Factor(hp, X)
    return _vjp_from_factor(hp, f, y, g_mean, g_cov)


def _vjp_from_factor(hp, f, y, g_mean, g_cov):
    A = f.inverse()
    s = f.s_eff
    alpha = A @ y
    Ag = A @ g_mean
    AGA = A @ g_cov @ A
    W = s * s * AGA + 0.5 * s * (np.outer(Ag, alpha) + np.outer(alpha, Ag))
    dK_sf, dK_l = gram_grad(hp.kernel, None, D2=f.D2)
    # derivative through the noise variance: P = K C^-1 = I - s C^-1
    P = np.eye(A.shape[0]) - s * A
    two_s = 2.0 * f.s
    g_sigma = -two_s * (g_mean @ (P @ alpha)) + two_s * np.sum((P @ g_cov) * P)
    return np.array([np.sum(W * dK_sf), np.sum(W * dK_l), g_sigma])


def predict(hp, X, y, Xstar, noise=False):
    """
    Predictive distribution of the latent function at the rows of `Xstar`.

    Variances are point-wise and latent by default; pass ``noise=True`` to
    include the observation noise.
    """
    X, y = _check_xy(X, y)
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None] if X.shape[1] == 1 else Xstar[None, :]
    if Xstar.shape[1] != X.shape[1]:
        raise ValueError('feature dimension mismatch: training %d, test %d'
                         % (X.shape[1], Xstar.shape[1]))
    if Xstar.shape[0] == 0:
        return PredictiveGaussian(np.zeros(0), np.zeros(0))
    f = _Factor(hp, X)
    Ks = gram_from_sq_dist(hp.kernel, sq_dist(X, Xstar))
    mean = Ks.T @ f.solve(y)
    V = sla.solve_triangular(f.L, Ks, lower=True, check_finite=False)
    var = np.maximum(hp.kernel.sf2 - np.sum(V * V, axis=0), 0.0)
    if noise:
        var = var + f.s
    return PredictiveGaussian(mean, var)
