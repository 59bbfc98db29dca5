"""
Cholesky helpers with escalating diagonal jitter.
"""

import numpy as np
import scipy.linalg as sla

from .errors import FactorizationError

# multiples of mean(diag) tried in order
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


def jitter_cholesky(A):
    """
    Lower Cholesky factor of the symmetric matrix `A`, adding
    ``delta * mean(diag(A))`` to the diagonal with delta taken from
    `JITTER_LADDER` until the factorization succeeds.

    Returns the pair ``(L, jitter)`` where `jitter` is the absolute amount
    added to the diagonal (0.0 when none was needed).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    if not np.all(np.isfinite(A)):
        raise FactorizationError('matrix has non-finite entries')
    scale = np.mean(np.diag(A))
    if not scale > 0:
        scale = 1.0
    for delta in JITTER_LADDER:
        jitter = delta * scale
        B = A if jitter == 0.0 else A + jitter * np.eye(n)
        try:
            L = sla.cholesky(B, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        # LAPACK can return without error on a few pathological inputs
        if np.all(np.diag(L) > 0):
            return L, jitter
    raise FactorizationError(
        'matrix of size %d not positive definite after jitter %.1e * %g'
        % (n, JITTER_LADDER[-1], scale))


def cho_solve(L, b):
    """Solve ``(L L^T) x = b``."""
    return sla.cho_solve((L, True), b, check_finite=False)


def cho_inverse(L):
    """Explicit inverse of ``L L^T`` (symmetric, both triangles filled)."""
    Ainv, info = sla.lapack.dpotri(L, lower=1)
    if info != 0:
        raise FactorizationError('dpotri failed with info=%d' % info)
    return np.tril(Ainv) + np.tril(Ainv, -1).T


def logdet(L):
    """Log-determinant of ``L L^T`` from its Cholesky factor."""
    return 2.0 * np.sum(np.log(np.diag(L)))


def symmetrize(A):
    return 0.5 * (A + A.T)
