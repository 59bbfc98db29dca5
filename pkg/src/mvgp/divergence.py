"""
KL divergence between multivariate Gaussians and its symmetrized form.

For ``p_a = N(mu_a, S_a)`` and ``p_b = N(mu_b, S_b)`` of dimension N::

    KL(p_a || p_b) = 1/2 [log|S_b| - log|S_a| + tr(S_b^-1 S_a)
                          + (mu_b - mu_a)^T S_b^-1 (mu_b - mu_a) - N]
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from . import _linalg as la
from .errors import FactorizationError

__all__ = ['KlBreakdown', 'KlGrad', 'kl', 'symmetric_kl', 'kl_param_grad',
           'symmetric_kl_and_grad']


@dataclass(frozen=True)
class KlBreakdown:
    logdet_term: float
    trace_term: float
    quad_term: float
    constant: float

    @property
    def total(self):
        return self.logdet_term + self.trace_term + self.quad_term + self.constant


class KlGrad(NamedTuple):
    mean_a: np.ndarray
    cov_a: np.ndarray
    mean_b: np.ndarray
    cov_b: np.ndarray


def _chol(p):
    if p.chol is not None:
        return p.chol
    try:
        L = sla.cholesky(p.cov, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationError('posterior covariance is not positive '
                                 'definite: %s' % exc) from None
    return L


def _check_dims(p_a, p_b):
    if p_a.dim != p_b.dim:
        raise ValueError('dimension mismatch: %d vs %d' % (p_a.dim, p_b.dim))


def _kl_from_factors(mu_a, La, mu_b, Lb):
    n = mu_a.shape[0]
    M = sla.solve_triangular(Lb, La, lower=True, check_finite=False)
    r = sla.solve_triangular(Lb, mu_b - mu_a, lower=True, check_finite=False)
    return KlBreakdown(
        logdet_term=0.5 * (la.logdet(Lb) - la.logdet(La)),
        trace_term=0.5 * float(np.sum(M * M)),
        quad_term=0.5 * float(r @ r),
        constant=-0.5 * n)


def kl(p_a, p_b):
    """KL(p_a || p_b) with each term reported separately."""
    _check_dims(p_a, p_b)
    return _kl_from_factors(p_a.mean, _chol(p_a), p_b.mean, _chol(p_b))


def symmetric_kl(p1, p2):
    """``KL(p1 || p2) + KL(p2 || p1)`` (no 1/2 factor)."""
    return kl(p1, p2).total + kl(p2, p1).total


def _grad_from_inverses(mu_a, Sa, Sa_inv, mu_b, Sb_inv):
    d = mu_b - mu_a
    Sb_inv_d = Sb_inv @ d
    cov_b = 0.5 * (Sb_inv - Sb_inv @ Sa @ Sb_inv - np.outer(Sb_inv_d, Sb_inv_d))
    return KlGrad(
        mean_a=-Sb_inv_d,
        cov_a=la.symmetrize(0.5 * (Sb_inv - Sa_inv)),
        mean_b=Sb_inv_d,
        cov_b=la.symmetrize(cov_b))


def kl_param_grad(p_a, p_b):
    """
    Gradient of ``kl(p_a, p_b).total`` with respect to the mean vectors and
    (symmetric) covariance matrices of both arguments.
    """
    _check_dims(p_a, p_b)
    Sa_inv = la.cho_inverse(_chol(p_a))
    Sb_inv = la.cho_inverse(_chol(p_b))
    return _grad_from_inverses(p_a.mean, p_a.cov, Sa_inv, p_b.mean, Sb_inv)


def symmetric_kl_and_grad(p1, p2):
    """
    Value of `symmetric_kl` together with its gradient with respect to
    ``(mu_1, S_1)`` and ``(mu_2, S_2)``, sharing one factorization per
    argument. Returns ``(value, (g_mean1, g_cov1), (g_mean2, g_cov2))``.
    """
    _check_dims(p1, p2)
    L1, L2 = _chol(p1), _chol(p2)
    value = (_kl_from_factors(p1.mean, L1, p2.mean, L2).total
             + _kl_from_factors(p2.mean, L2, p1.mean, L1).total)
    inv1, inv2 = la.cho_inverse(L1), la.cho_inverse(L2)
    g12 = _grad_from_inverses(p1.mean, p1.cov, inv1, p2.mean, inv2)
    g21 = _grad_from_inverses(p2.mean, p2.cov, inv2, p1.mean, inv1)
    return (value,
            (g12.mean_a + g21.mean_b, g12.cov_a + g21.cov_b),
            (g12.mean_b + g21.mean_a, g12.cov_b + g21.cov_a))
