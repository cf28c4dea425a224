"""Blind design of the regularization parameter and detection threshold.

Everything here uses the secondary data ``X`` and the steering vector ``p``
only. The consistent estimates ``sigma2_hat`` and ``f_hat`` are written in a
cancellation-free form: with ``R(rho) = (1 - rho) B + rho I``,

    p^* R^{-1} p - rho p^* R^{-2} p = (1 - rho) u^* B u,    u = R^{-1} p
    1 - (rho / N) tr R^{-1}         = (1 - rho) tr(B R^{-1}) / N

so the common ``(1 - rho)`` factors cancel exactly and the expressions stay
accurate up to and including ``rho = 1``, where they equal their one-sided
limits. ``B`` is the SCM for the RSCM and the normalized data term of the
fixed point for the RTE.

``f_hat`` carries a global ``1 / N`` so that it estimates ``f = g^2 / (2 a^2)``
and tends to ``N / (p^* B p)`` at ``rho = 1``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg

from anmf.errors import InvalidParameterError, NumericalError
from anmf.estimators import RTE_MAX_ITER, RTE_TOL, rte, rte_lower_bound, scm
from anmf.theory import rte_interval, theory_report

KAPPA = 0.05
GRID_STEP = 0.01
GOLDEN_TOL = 1e-4
_INV_PHI = (math.sqrt(5) - 1) / 2


def scm_interval(kappa=KAPPA):
    return (kappa, 1.0)


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)) or np.any(rho > 1):
        raise InvalidParameterError(f"rho must lie in (0, 1], got {rho}")
    return rho


class ScmSpectrum:
    """Eigen-decomposition of the SCM; evaluates the RSCM estimates for many rho at once.

    With ``R = V diag(l) V^*`` and ``w = |V^* p|^2``, ``R(rho)`` has
    eigenvalues ``d = (1 - rho) l + rho`` and every quadratic form or trace is
    a weighted sum over ``l``.
    """

    def __init__(self, R, p, c):
        l, V = np.linalg.eigh(np.asarray(R, dtype=complex))
        self.l = np.clip(l, 0.0, None)
        self.w = np.abs(V.conj().T @ np.asarray(p, dtype=complex)) ** 2
        self.c = float(c)
        self.N = self.l.size

    @classmethod
    def from_samples(cls, X, p):
        X = np.asarray(X)
        return cls(scm(X), p, X.shape[0] / X.shape[1])

    def _parts(self, rho):
        rho = _check_rho(rho)
        d = (1 - rho[..., None]) * self.l + rho[..., None]
        pRp = np.sum(self.w / d, axis=-1)  # p^* R^{-1}(rho) p
        uBu = np.sum(self.w * self.l / d**2, axis=-1)  # u^* R u
        tr_inv = np.mean(1.0 / d, axis=-1)
        tr_B_inv = np.mean(self.l / d, axis=-1)
        return rho, pRp, uBu, tr_inv, tr_B_inv

    def sigma2_hat(self, rho):
        rho, pRp, uBu, tr_inv, tr_B_inv = self._parts(rho)
        den = (1 - self.c + self.c * rho * tr_inv) * tr_B_inv
        if np.any(~(den > 0)) or np.any(~(uBu > 0)):
            raise NumericalError("sigma2_hat is undefined (degenerate sample covariance)")
        out = 0.5 * uBu / pRp / den
        return out[()] if out.ndim == 0 else out

    def f_hat(self, rho):
        rho, pRp, uBu, tr_inv, _ = self._parts(rho)
        if np.any(~(uBu > 0)):
            raise NumericalError("f_hat denominator vanished")
        out = pRp**2 * (1 - self.c + self.c * rho * tr_inv) ** 2 / uBu / self.N
        return out[()] if out.ndim == 0 else out


def sigma2_hat_scm(R, p, rho, c):
    """Consistent estimate of the RSCM false-alarm variance from the SCM ``R``."""
    return ScmSpectrum(R, p, c).sigma2_hat(rho)


def f_hat_scm(R, p, rho, c):
    """Consistent estimate of the RSCM detection objective, normalized by ``1 / N``."""
    return ScmSpectrum(R, p, c).f_hat(rho)


@dataclass(frozen=True)
class RteForms:
    """Quadratic forms of one RTE solution needed by the estimates."""

    rho: float
    pCp: float  # p^* C^{-1} p
    uBu: float  # u^* B u with u = C^{-1} p
    tr_B: float  # tr(B) / N
    N: int
    iterations: int

    def sigma2_hat(self, c):
        return 0.5 * self.uBu / self.pCp / (1 - c + c * self.rho)

    def f_hat(self, c):
        return self.pCp**2 * self.tr_B * (1 - c + c * self.rho) ** 2 / self.uBu / self.N


def rte_forms(X, C, p, rho, iterations=0):
    """Evaluate the forms from an RTE estimate ``C`` of the samples ``X``.

    ``B = (1/n) sum x x^* N / (x^* C^{-1} x)`` is recomputed from the data so
    that ``C - rho I`` never has to be formed.
    """
    N, n = X.shape
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        raise NumericalError(f"RTE estimate is not positive definite at rho={rho}") from None
    Y = scipy.linalg.solve_triangular(L, X, lower=True, check_finite=False)
    q = np.sum(Y.real**2 + Y.imag**2, axis=0)
    v = scipy.linalg.solve_triangular(L, p, lower=True, check_finite=False)
    u = scipy.linalg.solve_triangular(L, v, lower=True, trans="C", check_finite=False)
    weights = N / (n * q)
    xu = X.conj().T @ u
    uBu = float(np.sum(weights * np.abs(xu) ** 2))
    tr_B = float(np.sum(weights * np.sum(np.abs(X) ** 2, axis=0)) / N)
    if not uBu > 0:
        raise NumericalError(f"f_hat denominator vanished at rho={rho}")
    return RteForms(float(rho), float(np.vdot(v, v).real), uBu, tr_B, N, iterations)


def sigma2_hat_rte(X, C, p, rho, c):
    """Consistent estimate of the RTE false-alarm variance; ``C`` is the RTE at ``rho``."""
    return rte_forms(np.asarray(X, dtype=complex), C, np.asarray(p, dtype=complex), rho).sigma2_hat(c)


def f_hat_rte(X, C, p, rho, c):
    """Consistent estimate of the RTE detection objective, normalized by ``1 / N``."""
    return rte_forms(np.asarray(X, dtype=complex), C, np.asarray(p, dtype=complex), rho).f_hat(c)


class RteObjective:
    """``rho -> f_hat_rte(rho)`` with every RTE solution cached.

    Each new solve is warm-started from the cached solution at the nearest
    rho, which cuts the iteration count several-fold along a grid sweep.
    """

    def __init__(self, X, p, tol=RTE_TOL, max_iter=RTE_MAX_ITER, backend=None):
        self.X = np.ascontiguousarray(X, dtype=complex)
        self.p = np.asarray(p, dtype=complex)
        self.N, self.n = self.X.shape
        self.c = self.N / self.n
        self.tol = tol
        self.max_iter = max_iter
        self.backend = backend
        self._estimates = {}
        self._forms = {}

    def estimate(self, rho):
        rho = float(rho)
        if rho not in self._estimates:
            if rho == 1.0:
                C, iters = np.eye(self.N, dtype=complex), 0
            else:
                init = None
                if self._estimates:
                    nearest = min(self._estimates, key=lambda r: abs(r - rho))
                    init = self._estimates[nearest]
                rep = rte(self.X, rho, self.tol, self.max_iter, init=init, backend=self.backend)
                if not rep.converged:
                    raise NumericalError(f"RTE did not converge at rho={rho} "
                                         f"(residual {rep.final_residual:.2e} after {rep.iterations} iterations)")
                C, iters = rep.estimate, rep.iterations
            self._estimates[rho] = C
            self._forms[rho] = rte_forms(self.X, C, self.p, rho, iters)
        return self._estimates[rho]

    def forms(self, rho):
        self.estimate(rho)
        return self._forms[float(rho)]

    def sigma2_hat(self, rho):
        return self.forms(rho).sigma2_hat(self.c)

    def f_hat(self, rho):
        return self.forms(rho).f_hat(self.c)

    __call__ = f_hat

    @property
    def total_iterations(self):
        return sum(f.iterations for f in self._forms.values())


def rho_grid(interval, step=GRID_STEP):
    """Points ``lo, lo + step, ...`` up to ``hi``, always including ``hi``."""
    lo, hi = map(float, interval)
    if not lo <= hi:
        raise InvalidParameterError(f"empty interval [{lo}, {hi}]")
    if not step > 0:
        raise InvalidParameterError(f"grid step must be positive, got {step}")
    k = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(k + 1)
    if hi - grid[-1] > 1e-9 * step:
        return np.append(grid, hi)
    grid[-1] = hi
    return grid


@dataclass(frozen=True)
class RhoSearch:
    rho_star: float
    value: float
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # nan where the objective failed
    skipped: tuple = ()


def _safe_eval(objective, rho):
    try:
        v = float(objective(rho))
    except (NumericalError, InvalidParameterError, np.linalg.LinAlgError, FloatingPointError):
        return np.nan
    return v if np.isfinite(v) else np.nan


def _golden_max(objective, a, b, tol):
    """Golden-section maximization on ``[a, b]``; returns the best point evaluated."""
    best_x, best_v = None, -np.inf
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = _safe_eval(objective, x1), _safe_eval(objective, x2)
    while b - a > tol:
        # a failed evaluation counts as -inf so the search moves away from it
        if np.nan_to_num(f1, nan=-np.inf) >= np.nan_to_num(f2, nan=-np.inf):
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = _safe_eval(objective, x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = _safe_eval(objective, x2)
    for x, v in sorted(((x1, f1), (x2, f2))):
        if np.isfinite(v) and v > best_v:
            best_x, best_v = x, v
    return best_x, best_v


def optimize_rho(objective, interval, grid_step=GRID_STEP, tol=GOLDEN_TOL, vectorized=False):
    """Maximize ``objective`` over ``interval``.

    A grid scan with ``grid_step`` is followed by golden-section refinement
    to ``tol`` over the two cells adjacent to the best grid point. The
    refined point replaces the grid point only if strictly better; ties go to
    the smallest rho. Points where the objective fails are skipped and listed
    in ``skipped``.
    """
    grid = rho_grid(interval, grid_step)
    if vectorized:
        try:
            values = np.asarray(objective(grid), dtype=float)
        except (NumericalError, InvalidParameterError, np.linalg.LinAlgError):
            values = np.array([_safe_eval(objective, r) for r in grid])
        values = np.where(np.isfinite(values), values, np.nan)
    else:
        # descending order: warm-started objectives begin next to rho = 1
        values = np.array([_safe_eval(objective, r) for r in grid[::-1]])[::-1]
    ok = np.isfinite(values)
    if not ok.any():
        raise NumericalError("objective failed at every grid point")
    skipped = tuple(float(r) for r in grid[~ok])
    i = int(np.nanargmax(values))  # first maximum, i.e. the smallest rho
    rho_star, best = float(grid[i]), float(values[i])
    if grid.size > 1 and tol is not None:
        lo = grid[i - 1] if i > 0 else grid[i]
        hi = grid[i + 1] if i + 1 < grid.size else grid[i]
        f_scalar = (lambda r: objective(np.asarray(r))) if vectorized else objective
        x, v = _golden_max(f_scalar, float(lo), float(hi), tol)
        if x is not None and v > best:
            rho_star, best = float(x), float(v)
    return RhoSearch(rho_star, best, grid, values, skipped)


def set_threshold(sigma_hat, eta):
    """``r = sigma * sqrt(-2 ln eta)``, so that ``exp(-r^2 / (2 sigma^2)) = eta``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(~(eta > 0)) or np.any(~(eta < 1)):
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta}")
    if not sigma_hat > 0:
        raise InvalidParameterError(f"sigma_hat must be positive, got {sigma_hat}")
    r = sigma_hat * np.sqrt(-2.0 * np.log(eta))
    return r[()] if r.ndim == 0 else r


@dataclass(frozen=True)
class DesignOutput:
    """Regularization and thresholds chosen from secondary data.

    ``r_hat`` and ``gamma_threshold`` are parallel to ``eta``; the detector
    declares a target when ``t > gamma_threshold`` (equivalently
    ``sqrt(N) t > r_hat``).
    """

    rho_star: float
    sigma_hat: float
    eta: tuple
    r_hat: tuple
    gamma_threshold: tuple
    objective_curve: tuple | None = field(default=None, repr=False)  # (grid, values)

    @classmethod
    def build(cls, N, rho_star, sigma2, eta, curve=None):
        if not sigma2 > 0:
            raise NumericalError(f"estimated variance is not positive at rho={rho_star}")
        sigma = float(np.sqrt(sigma2))
        eta = tuple(float(e) for e in np.atleast_1d(eta))
        r = np.atleast_1d(set_threshold(sigma, eta))
        return cls(float(rho_star), sigma, eta, tuple(map(float, r)), tuple(map(float, r / np.sqrt(N))), curve)


def _fixed_rho(rho, interval, name):
    rho = float(rho)
    lo, hi = interval
    if not (lo < rho <= hi or (rho == lo and lo > 0)):
        raise InvalidParameterError(f"rho={rho} lies outside the {name} range ({lo:g}, {hi:g}]")
    return rho


def design_rscm(X, p, eta, rho="optimal", kappa=KAPPA, grid_step=GRID_STEP, keep_curve=False):
    """Optimal (or fixed) RSCM regularization and thresholds from secondary data."""
    X = np.asarray(X, dtype=complex)
    spec = ScmSpectrum.from_samples(X, p)
    if isinstance(rho, str):
        if rho != "optimal":
            raise InvalidParameterError(f"rho must be 'optimal' or a number, got {rho!r}")
        search = optimize_rho(spec.f_hat, scm_interval(kappa), grid_step, vectorized=True)
        rho_star = search.rho_star
        curve = (search.grid, search.values) if keep_curve else None
    else:
        rho_star = _fixed_rho(rho, (0.0, 1.0), "RSCM")
        curve = None
    return DesignOutput.build(X.shape[0], rho_star, spec.sigma2_hat(rho_star), eta, curve)


def rte_design_interval(N, n, kappa=KAPPA):
    return rte_interval(N / n, kappa)


def design_rte(X, p, eta, rho="optimal", kappa=KAPPA, grid_step=GRID_STEP, keep_curve=False,
               objective=None):
    """Optimal (or fixed) RTE regularization and thresholds from secondary data.

    Returns ``(DesignOutput, RteObjective)``; the objective holds the RTE at
    ``rho_star`` for building the statistic.
    """
    X = np.asarray(X, dtype=complex)
    N, n = X.shape
    obj = objective if objective is not None else RteObjective(X, p)
    if isinstance(rho, str):
        if rho != "optimal":
            raise InvalidParameterError(f"rho must be 'optimal' or a number, got {rho!r}")
        search = optimize_rho(obj, rte_design_interval(N, n, kappa), grid_step)
        rho_star = search.rho_star
        curve = (search.grid, search.values) if keep_curve else None
    else:
        rho_star = _fixed_rho(rho, (rte_lower_bound(N, n), 1.0), "RTE")
        curve = None
    return DesignOutput.build(N, rho_star, obj.sigma2_hat(rho_star), eta, curve), obj


def population_optimum(C, p, c, method="rscm", kappa=KAPPA, grid_step=GRID_STEP, texture=None):
    """Maximizer of the deterministic-equivalent ``f`` (the clairvoyant design)."""
    interval = scm_interval(kappa) if method == "rscm" else rte_interval(c, kappa)

    def f(rho):
        return theory_report(method, C, p, c, float(rho), 1.0, texture).f

    search = optimize_rho(f, interval, grid_step)
    return search.rho_star, theory_report(method, C, p, c, search.rho_star, 1.0, texture)
