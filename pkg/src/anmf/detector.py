"""Normalized matched filter statistics.

``t = |y^* A^{-1} p| / sqrt(y^* A^{-1} y * p^* A^{-1} p)`` with ``A`` the true
covariance (NMF) or a regularized estimate (ANMF). The detector declares a
target when ``sqrt(N) * t`` exceeds the threshold ``r``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from anmf.errors import InvalidParameterError, NumericalError


@dataclass(frozen=True)
class StatisticValue:
    t: float
    scaled: float  # sqrt(N) * t


class HermitianFactor:
    """Cholesky factorization of a Hermitian PD matrix, reused across solves."""

    def __init__(self, A):
        A = np.asarray(A, dtype=complex)
        self.N = A.shape[0]
        try:
            self.L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise NumericalError("matrix is not positive definite", condition=condition_number(A)) from None

    def whiten(self, v):
        """``L^{-1} v`` so that ``|L^{-1} v|^2 = v^* A^{-1} v``."""
        return scipy.linalg.solve_triangular(self.L, v, lower=True, check_finite=False)

    def solve(self, v):
        u = self.whiten(v)
        return scipy.linalg.solve_triangular(self.L, u, lower=True, trans="C", check_finite=False)

    def quad(self, v):
        u = self.whiten(v)
        return float(np.vdot(u, u).real)


def condition_number(A):
    lam = np.linalg.eigvalsh(A)
    return np.inf if lam[0] <= 0 else lam[-1] / lam[0]


def _as_factor(A):
    return A if isinstance(A, HermitianFactor) else HermitianFactor(A)


def anmf_statistics(A, Y, p):
    """Vectorized statistic for the columns of ``Y``; returns an array of ``t``."""
    F = _as_factor(A)
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    U = F.whiten(Y)
    v = F.whiten(np.asarray(p, dtype=complex))
    num = np.abs(U.conj().T @ v)
    den = np.sqrt(np.sum(np.abs(U) ** 2, axis=0) * np.vdot(v, v).real)
    if np.any(den == 0):
        raise InvalidParameterError("y and p must be nonzero")
    return np.minimum(num / den, 1.0)


def anmf_statistic(A, y, p):
    """ANMF statistic with plug-in covariance ``A`` (a matrix or a :class:`HermitianFactor`)."""
    F = _as_factor(A)
    t = float(anmf_statistics(F, y, p)[0])
    return StatisticValue(t, np.sqrt(F.N) * t)


def nmf_oracle(C, y, p):
    """NMF statistic with the true covariance."""
    return anmf_statistic(C, y, p)
