"""Covariance models, steering vectors and Hermitian spectral utilities.

Vectors and matrices are plain complex ``numpy`` arrays. Covariances are
trace-normalized so that ``trace(C) / N == 1``; every statistic in the
package is invariant to the scale of ``C``.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from anmf.errors import InvalidParameterError, NumericalError

HERMITIAN_RTOL = 1e-12
PSD_CLIP = 1e-8


def check_hermitian(A, name="matrix"):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {A.shape}")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.conj().T).max() > HERMITIAN_RTOL * scale:
        raise InvalidParameterError(f"{name} is not Hermitian")
    return A


def build_toeplitz_covariance(b, N):
    """Hermitian Toeplitz covariance with ``C[i, j] = b**(j - i)`` for ``i <= j``.

    The diagonal is one, so ``trace(C) / N == 1``.
    """
    b = complex(b)
    if not abs(b) < 1:
        raise InvalidParameterError(f"b must satisfy |b| < 1, got |b| = {abs(b):.6g}")
    if int(N) < 1:
        raise InvalidParameterError(f"N must be positive, got {N}")
    powers = b ** np.arange(int(N))
    C = scipy.linalg.toeplitz(powers.conj(), powers)
    lam_min = np.linalg.eigvalsh(C)[0]
    if lam_min < -PSD_CLIP * N:
        raise NumericalError(f"Toeplitz covariance with b={b} is not PSD (min eigenvalue {lam_min:.3g})")
    return C


def steering_vector(theta, N):
    """``a(theta)[k] = exp(-1j*pi*k*sin(theta))`` with theta in degrees."""
    k = np.arange(int(N))
    return np.exp(-1j * np.pi * k * np.sin(np.deg2rad(theta)))


def normalize_trace(C):
    """Rescale ``C`` so that ``trace(C) / N == 1``."""
    C = check_hermitian(C, "covariance")
    tr = np.trace(C).real
    if not tr > 0:
        raise InvalidParameterError("covariance must have positive trace")
    return C * (C.shape[0] / tr)


@dataclass(frozen=True)
class SpectralMeasure:
    """Eigen-decomposition ``C = U diag(eigenvalues) U^*``, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def N(self):
        return self.eigenvalues.size

    def reconstruct(self):
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T

    def rotate(self, v):
        """Coordinates of ``v`` in the eigenbasis, ``U^* v``."""
        return self.eigenvectors.conj().T @ v


def spectral_measure(C):
    C = check_hermitian(C, "covariance")
    lam, U = np.linalg.eigh(C)
    return SpectralMeasure(lam[::-1].copy(), U[:, ::-1].copy())


def hermitian_sqrt(C):
    """PSD square root via the spectral decomposition.

    Eigenvalues within ``-1e-8 * max`` of zero are clipped; anything more
    negative raises :class:`NumericalError`.
    """
    spec = spectral_measure(C)
    lam = spec.eigenvalues
    top = max(lam[0], 0.0)
    if lam[-1] < -PSD_CLIP * top:
        raise NumericalError(f"matrix is not PSD (eigenvalue {lam[-1]:.3g})")
    U = spec.eigenvectors
    S = (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.conj().T
    return 0.5 * (S + S.conj().T)


@dataclass(frozen=True)
class TextureModel:
    """Texture law of the compound-Gaussian clutter.

    ``shape=None`` is the Gaussian case (texture identically one); otherwise
    the texture is Gamma(shape, scale=1/shape), giving K-distributed clutter
    with unit mean power.
    """

    shape: float | None = None

    def __post_init__(self):
        if self.shape is not None and not self.shape > 0:
            raise InvalidParameterError(f"texture shape nu must be positive, got {self.shape}")

    @classmethod
    def one(cls):
        return cls(None)

    @classmethod
    def gamma_k(cls, nu):
        return cls(float(nu))

    @property
    def is_gaussian(self):
        return self.shape is None

    def __str__(self):
        return "one" if self.is_gaussian else f"gamma_k(nu={self.shape:g})"


@dataclass(frozen=True, eq=False)
class Scenario:
    """Complete description of one detection experiment."""

    N: int
    n: int
    b: complex | None = 0.96j
    covariance: np.ndarray | None = field(default=None, repr=False)
    theta: float = 20.0
    a: float = 0.9
    texture: TextureModel = TextureModel()
    eta_grid: tuple = (0.05,)
    trials: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if int(self.N) < 2:
            raise InvalidParameterError(f"N must be >= 2, got {self.N}")
        if int(self.n) < 1:
            raise InvalidParameterError(f"n must be >= 1, got {self.n}")
        if self.covariance is None:
            if self.b is None:
                raise InvalidParameterError("either b or an explicit covariance is required")
            if not abs(complex(self.b)) < 1:
                raise InvalidParameterError(f"b must satisfy |b| < 1, got |b| = {abs(complex(self.b)):.6g}")
        else:
            C = np.asarray(self.covariance)
            if C.shape != (self.N, self.N):
                raise InvalidParameterError(f"covariance must be {self.N}x{self.N}, got {C.shape}")
            object.__setattr__(self, "covariance", normalize_trace(C))
        if not self.a >= 0:
            raise InvalidParameterError(f"a must be >= 0, got {self.a}")
        etas = tuple(float(e) for e in np.atleast_1d(self.eta_grid))
        if not etas or not all(0 < e < 1 for e in etas):
            raise InvalidParameterError(f"eta values must lie in (0, 1), got {etas}")
        object.__setattr__(self, "eta_grid", etas)
        if int(self.trials) < 0:
            raise InvalidParameterError(f"trials must be >= 0, got {self.trials}")

    @property
    def c(self):
        return self.N / self.n

    @cached_property
    def C(self):
        if self.covariance is not None:
            return self.covariance
        return build_toeplitz_covariance(self.b, self.N)

    @cached_property
    def C_sqrt(self):
        return hermitian_sqrt(self.C)

    @cached_property
    def spectrum(self):
        return spectral_measure(self.C)

    @cached_property
    def p(self):
        return steering_vector(self.theta, self.N)

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)
