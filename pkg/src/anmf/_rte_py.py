"""Pure-numpy RTE fixed-point iteration (fallback for the compiled kernel).

Same algorithm, packing and safeguards as ``anmf._rte_core``: the RTE map
with optional Anderson extrapolation over the last ``depth`` steps.
"""
import numpy as np
from scipy.linalg import solve_triangular

MAX_DEPTH = 16
RIDGE = 1e-12


def _packing(N):
    rows, cols = np.tril_indices(N)
    wt = np.where(rows == cols, 1.0, 2.0)
    return rows, cols, np.concatenate([wt, np.where(rows == cols, 0.0, 2.0)])


def _pack(C, rows, cols):
    v = C[rows, cols]
    return np.concatenate([v.real, v.imag])


def _unpack(v, N, rows, cols):
    P = rows.size
    C = np.zeros((N, N), dtype=np.complex128)
    C[rows, cols] = v[:P] + 1j * v[P:]
    C[cols, rows] = v[:P] - 1j * v[P:]
    C[np.diag_indices(N)] = C.diagonal().real
    return C


def _apply_map(X, C, scale, rho):
    L = np.linalg.cholesky(C)
    Y = solve_triangular(L, X, lower=True, check_finite=False)
    q = (Y.real**2 + Y.imag**2).sum(axis=0)
    if not np.all(q > 0):
        raise ZeroDivisionError
    Xw = X * np.sqrt(scale / q)
    G = Xw @ Xw.conj().T
    G[np.diag_indices(C.shape[0])] += rho
    return G


def rte_fixed_point(X, rho, tol, max_iter, init=None, depth=3):
    """Iterate the RTE map from ``init`` (identity if None).

    Same contract as the compiled ``anmf._rte_core.rte_fixed_point``.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}], got {depth}")
    X = np.asarray(X, dtype=np.complex128)
    N, n = X.shape
    rows, cols, wt = _packing(N)
    scale = (1.0 - rho) * N / n
    C = np.eye(N, dtype=np.complex128) if init is None else np.array(init, dtype=np.complex128)
    x = _pack(C, rows, cols)
    C = _unpack(x, N, rows, cols)
    G_hist, F_hist = [], []
    resid = np.inf
    g = x
    for it in range(max_iter):
        try:
            Gm = _apply_map(X, C, scale, rho)
        except np.linalg.LinAlgError:
            if len(G_hist) > 1:
                # extrapolated iterate left the PD cone: restart from the last image
                x = G_hist[-1]
                G_hist, F_hist = [], []
                C = _unpack(x, N, rows, cols)
                try:
                    Gm = _apply_map(X, C, scale, rho)
                except np.linalg.LinAlgError:
                    raise np.linalg.LinAlgError("RTE iterate is not positive definite") from None
                except ZeroDivisionError:
                    raise np.linalg.LinAlgError("zero-norm sample in RTE data") from None
            else:
                raise np.linalg.LinAlgError("RTE iterate is not positive definite") from None
        except ZeroDivisionError:
            raise np.linalg.LinAlgError("zero-norm sample in RTE data") from None
        g = _pack(Gm, rows, cols)
        f = g - x
        resid = float(np.sqrt(np.dot(wt, f * f) / np.dot(wt, g * g)))
        if resid <= tol:
            return _unpack(g, N, rows, cols), it + 1, resid
        if depth == 0:
            x = g
        else:
            G_hist.append(g)
            F_hist.append(f)
            del G_hist[:-(depth + 1)], F_hist[:-(depth + 1)]
            x = g
            if len(F_hist) > 1:
                dF = np.diff(np.array(F_hist), axis=0)
                gram = (dF * wt) @ dF.T
                gram[np.diag_indices_from(gram)] += RIDGE * np.trace(gram) / gram.shape[0]
                rhs = (dF * wt) @ f
                try:
                    Lg = np.linalg.cholesky(gram)
                except np.linalg.LinAlgError:
                    G_hist, F_hist = [g], [f]
                else:
                    gamma = solve_triangular(Lg.T, solve_triangular(Lg, rhs, lower=True), lower=False)
                    x = g - gamma @ np.diff(np.array(G_hist), axis=0)
        C = _unpack(x, N, rows, cols)
    return _unpack(g, N, rows, cols), max_iter, resid
