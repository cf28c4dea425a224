"""Large-dimensional false-alarm and detection theory for the ANMF.

All covariance-dependent quantities are evaluated in the eigenbasis of the
true covariance ``C``: with ``lam`` its eigenvalues and ``w = |U^* p|^2``,

    Q(rho)          = diag(1 / (1 + (1 - rho) m lam))
    p^* Q p         = sum w q
    p^* C Q^2 p     = sum w lam q^2
    tr(C^k Q^j) / N = mean(lam^k q^j)

where ``m = m_N(-rho)`` solves the Stieltjes fixed point. Under H0,
``sqrt(N) t`` is asymptotically Rayleigh with parameter ``sigma``; under H1
it is Rice with location ``g`` and the same scale.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from anmf.errors import InvalidParameterError, NumericalError
from anmf.marcum import marcum_q1
from anmf.model import SpectralMeasure, TextureModel, spectral_measure

M_TOL = 1e-12
M_MAX_ITER = 10_000
QUAD_NODES = 128


def _eigenvalues(eigs):
    if isinstance(eigs, SpectralMeasure):
        return eigs.eigenvalues
    eigs = np.asarray(eigs)
    if eigs.ndim == 2:
        return spectral_measure(eigs).eigenvalues
    return eigs.astype(float)


def _spectrum(C):
    return C if isinstance(C, SpectralMeasure) else spectral_measure(C)


def solve_m(eigs, c, rho, tol=M_TOL, max_iter=M_MAX_ITER):
    """Positive solution ``m = m_N(-rho)`` of

        m = 1 / (rho + c (1 - rho) mean(lam / (1 + (1 - rho) m lam)))

    by fixed-point iteration from ``m = 1 / rho``.
    """
    if not 0 < rho <= 1:
        raise InvalidParameterError(f"rho must lie in (0, 1], got {rho}")
    if c < 0:
        raise InvalidParameterError(f"c must be non-negative, got {c}")
    lam = _eigenvalues(eigs)
    m = 1.0 / rho
    for _ in range(max_iter):
        m_new = 1.0 / (rho + c * (1 - rho) * np.mean(lam / (1 + (1 - rho) * m * lam)))
        if abs(m_new - m) <= tol:
            return m_new
        m = m_new
    raise NumericalError(f"m_N(-rho) iteration did not converge (rho={rho}, c={c})")


def solve_gamma(eigs, rho, tol=1e-14):
    """Unique ``gamma > 0`` with ``mean(lam / (gamma rho + (1 - rho) lam)) = 1``.

    The left side is strictly decreasing in gamma; solved by bisection.
    """
    if not 0 < rho <= 1:
        raise InvalidParameterError(f"rho must lie in (0, 1], got {rho}")
    lam = _eigenvalues(eigs)

    def h(g):
        return np.mean(lam / (g * rho + (1 - rho) * lam)) - 1.0

    lo, hi = 0.0, 1.0
    while h(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("gamma bracket failure")
    if rho < 1 and not h(np.finfo(float).tiny) > 0:
        raise NumericalError("gamma bracket failure (covariance too singular)")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rho_to_rho_bar(rho, gamma, c):
    """Regularization at which the RSCM-based statistic matches the RTE at ``rho``."""
    if not (1 - rho) * c < 1:
        raise InvalidParameterError(f"(1 - rho) c must be < 1, got {(1 - rho) * c:g}")
    return rho / (rho + (1 - rho) / (gamma * (1 - (1 - rho) * c)))


def pfa_theory(r, sigma):
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    return np.exp(-np.square(r) / (2 * sigma**2))


def pd_theory(g, r, sigma):
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    return marcum_q1(g, np.asarray(r) / sigma)


@lru_cache(maxsize=64)
def _texture_rule(shape, nodes=QUAD_NODES):
    """Nodes and weights for E[h(tau)] with tau ~ Gamma(shape, 1/shape).

    Generalized Gauss-Laguerre rule built from the Jacobi matrix of the
    Laguerre recurrence (Golub-Welsch); unlike tabulated weights this stays
    accurate for very large shape parameters.
    """
    alpha = shape - 1.0
    k = np.arange(1, nodes)
    x, V = linalg.eigh_tridiagonal(2 * np.arange(nodes) + alpha + 1, np.sqrt(k * (k + alpha)))
    w = V[0] ** 2
    return x / shape, w / w.sum()


def texture_expectation(func, texture):
    """``E[func(tau)]`` for the texture law; ``func`` must accept arrays."""
    if texture is None or texture.is_gaussian:
        return func(np.ones(1))[0]
    tau, w = _texture_rule(float(texture.shape))
    return float(np.dot(w, func(tau)))


@dataclass(frozen=True)
class TheoryReport:
    """Deterministic equivalents at one regularization value.

    For the RTE, ``m``, ``sigma2``, ``g`` and ``f`` are evaluated at
    ``rho_bar``; ``g`` is the location for unit texture (``g / sqrt(tau)``
    in general).
    """

    rho: float
    m: float
    sigma2: float
    g: float
    f: float
    a: float
    rho_bar: float | None = None
    gamma: float | None = None
    texture: TextureModel | None = None

    @property
    def sigma(self):
        return np.sqrt(self.sigma2)

    def pfa(self, r):
        return pfa_theory(r, self.sigma)

    def pd(self, r):
        b = np.asarray(r, dtype=float) / self.sigma
        if self.texture is None or self.texture.is_gaussian:
            return marcum_q1(self.g, b)
        out = np.array([texture_expectation(lambda tau: marcum_q1(self.g / np.sqrt(tau), bi), self.texture)
                        for bi in np.atleast_1d(b)])
        return out[0] if np.ndim(r) == 0 else out

    def threshold(self, eta):
        return self.sigma * np.sqrt(-2 * np.log(eta))


def _scm_equivalents(spec, pw, c, rho, a):
    lam = spec.eigenvalues
    N = lam.size
    m = solve_m(lam, c, rho)
    q = 1.0 / (1.0 + (1 - rho) * m * lam)
    pQp = np.dot(pw, q)
    pCQ2p = np.dot(pw, lam * q**2)
    trCQ = np.mean(lam * q)
    denom = 1.0 - c * (1 - rho) ** 2 * m**2 * np.mean(lam**2 * q**2)
    if not denom > 0:
        raise NumericalError(f"variance denominator is non-positive at rho={rho} ({denom:.3g})")
    sigma2 = 0.5 * pCQ2p / (pQp * trCQ) / denom
    g = np.sqrt(denom / pCQ2p) * np.sqrt(2.0 / N) * a * abs(pQp)
    f = denom / pCQ2p * pQp**2 / N
    return m, sigma2, g, f


def theory_scm(C, p, c, rho, a):
    """Asymptotic false-alarm/detection description of the ANMF-RSCM at ``rho``.

    ``f = g^2 / (2 a^2)`` is computed directly, so it is defined for ``a = 0``.
    """
    if not 0 < rho <= 1:
        raise InvalidParameterError(f"rho must lie in (0, 1], got {rho}")
    spec = _spectrum(C)
    pw = np.abs(spec.rotate(np.asarray(p, dtype=complex))) ** 2
    m, sigma2, g, f = _scm_equivalents(spec, pw, c, rho, a)
    return TheoryReport(rho=rho, m=m, sigma2=sigma2, g=g, f=f, a=a)


def rte_interval(c, kappa):
    """``[kappa + max(0, 1 - 1/c), 1]``."""
    return (kappa + max(0.0, 1.0 - 1.0 / c), 1.0)


def theory_rte(C, p, c, rho, a, texture=None):
    """Asymptotic description of the ANMF-RTE at ``rho``.

    Equal to the RSCM description at the mapped regularization ``rho_bar``;
    detection averages the Marcum Q-function over the texture law.
    """
    spec = _spectrum(C)
    gamma = solve_gamma(spec, rho)
    rho_bar = rho_to_rho_bar(rho, gamma, c)
    pw = np.abs(spec.rotate(np.asarray(p, dtype=complex))) ** 2
    m, sigma2, g, f = _scm_equivalents(spec, pw, c, rho_bar, a)
    return TheoryReport(rho=rho, m=m, sigma2=sigma2, g=g, f=f, a=a, rho_bar=rho_bar, gamma=gamma,
                        texture=texture)


def theory_report(method, C, p, c, rho, a, texture=None):
    if method == "rscm":
        return theory_scm(C, p, c, rho, a)
    if method == "rte":
        return theory_rte(C, p, c, rho, a, texture)
    raise InvalidParameterError(f"unknown method {method!r}")
