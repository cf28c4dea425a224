# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fixed-point iteration for the regularized Tyler estimator.

Each step applies the RTE map ``T(C) = (1-rho) N/n sum x x^* / (x^* C^{-1} x)
+ rho I`` and, with ``depth > 0``, Anderson-extrapolates over the last
``depth`` steps. The plain map contracts only like ``(1 - rho)`` along the
scale direction; extrapolation removes that mode. If an extrapolated iterate
is not positive definite the history is dropped and the plain image (always
PD) is used instead.

Complex arithmetic is carried on split real/imaginary buffers so the inner
loops stay contiguous; only the lower triangle of each iterate is formed.
Iterates are packed as ``[re(lower), im(lower)]`` with Frobenius weights.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

MAX_DEPTH = 16
# ridge added to the normal equations, relative to their mean diagonal
cdef double RIDGE = 1e-12


cdef int _cholesky(double[:, ::1] ar, double[:, ::1] ai,
                   double[:, ::1] lr, double[:, ::1] li, int N) noexcept nogil:
    cdef int i, j, k
    cdef double sr, si, d
    for j in range(N):
        d = ar[j, j]
        for k in range(j):
            d -= lr[j, k] * lr[j, k] + li[j, k] * li[j, k]
        if not d > 0.0:
            return -1
        d = sqrt(d)
        lr[j, j] = d
        li[j, j] = 0.0
        for i in range(j + 1, N):
            sr = ar[i, j]
            si = ai[i, j]
            for k in range(j):
                sr -= lr[i, k] * lr[j, k] + li[i, k] * li[j, k]
                si -= li[i, k] * lr[j, k] - lr[i, k] * li[j, k]
            lr[i, j] = sr / d
            li[i, j] = si / d
    return 0


cdef int _apply_map(double[:, ::1] xr, double[:, ::1] xi,
                    double[:, ::1] lr, double[:, ::1] li,
                    double[::1] yr, double[::1] yi,
                    double[::1] g, double scale, double rho, int N) noexcept nogil:
    """Packed lower triangle of T(C) given the Cholesky factor of C."""
    cdef int n = xr.shape[0]
    cdef int P = N * (N + 1) // 2
    cdef int i, j, k, col, idx
    cdef double sr, si, q, w, ar, ai_
    for idx in range(2 * P):
        g[idx] = 0.0
    for col in range(n):
        # y = L^{-1} x, q = |y|^2 = x^* C^{-1} x
        q = 0.0
        for i in range(N):
            sr = xr[col, i]
            si = xi[col, i]
            for k in range(i):
                sr -= lr[i, k] * yr[k] - li[i, k] * yi[k]
                si -= lr[i, k] * yi[k] + li[i, k] * yr[k]
            sr = sr / lr[i, i]
            si = si / lr[i, i]
            yr[i] = sr
            yi[i] = si
            q += sr * sr + si * si
        if not q > 0.0:
            return -2
        w = scale / q
        idx = 0
        for i in range(N):
            ar = w * xr[col, i]
            ai_ = w * xi[col, i]
            for j in range(i + 1):
                g[idx] += ar * xr[col, j] + ai_ * xi[col, j]
                g[P + idx] += ai_ * xr[col, j] - ar * xi[col, j]
                idx += 1
    idx = 0
    for i in range(N):
        idx += i
        g[idx] += rho
        g[P + idx] = 0.0
        idx += 1
    return 0


cdef void _unpack(double[::1] v, double[:, ::1] cr, double[:, ::1] ci, int N) noexcept nogil:
    cdef int P = N * (N + 1) // 2
    cdef int i, j, idx = 0
    for i in range(N):
        for j in range(i + 1):
            cr[i, j] = v[idx]
            ci[i, j] = v[P + idx]
            cr[j, i] = v[idx]
            ci[j, i] = -v[P + idx]
            idx += 1
        ci[i, i] = 0.0


cdef void _pack(double[:, ::1] cr, double[:, ::1] ci, double[::1] v, int N) noexcept nogil:
    cdef int P = N * (N + 1) // 2
    cdef int i, j, idx = 0
    for i in range(N):
        for j in range(i + 1):
            v[idx] = cr[i, j]
            v[P + idx] = ci[i, j]
            idx += 1


cdef double _dot(double[::1] a, double[::1] b, double[::1] wt, int M) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(M):
        s += wt[k] * a[k] * b[k]
    return s


cdef int _small_solve(double[:, ::1] A, double[::1] b, int k) noexcept nogil:
    """Solve the SPD system A z = b in place (b <- z); -1 if not SPD."""
    cdef int i, j, l
    cdef double d
    for j in range(k):
        d = A[j, j]
        for l in range(j):
            d -= A[j, l] * A[j, l]
        if not d > 0.0:
            return -1
        d = sqrt(d)
        A[j, j] = d
        for i in range(j + 1, k):
            for l in range(j):
                A[i, j] -= A[i, l] * A[j, l]
            A[i, j] /= d
    for i in range(k):
        for l in range(i):
            b[i] -= A[i, l] * b[l]
        b[i] /= A[i, i]
    for i in range(k - 1, -1, -1):
        for l in range(i + 1, k):
            b[i] -= A[l, i] * b[l]
        b[i] /= A[i, i]
    return 0


cdef int _iterate(double[:, ::1] xr, double[:, ::1] xi,
                  double[:, ::1] cr, double[:, ::1] ci,
                  double[:, ::1] lr, double[:, ::1] li,
                  double[::1] yr, double[::1] yi,
                  double[::1] x, double[::1] g, double[::1] wt,
                  double[:, ::1] Gh, double[:, ::1] Fh,
                  double[:, ::1] dF, double[:, ::1] gram, double[::1] rhs,
                  double rho, double tol, int max_iter, int depth,
                  int *iters, double *resid) noexcept nogil:
    cdef int N = cr.shape[0]
    cdef int n = xr.shape[0]
    cdef int M = N * (N + 1)
    cdef int it, k, a, b2, j, slot, count = 0, head = 0, status
    cdef int hist = depth + 1
    cdef double scale = (1.0 - rho) * N / n
    cdef double fn, gn, tr_gram
    resid[0] = INFINITY
    _pack(cr, ci, x, N)
    for it in range(max_iter):
        if _cholesky(cr, ci, lr, li, N) != 0:
            if count > 1:
                # extrapolated iterate left the PD cone: restart from the last image
                slot = (head + hist - 1) % hist
                for k in range(M):
                    x[k] = Gh[slot, k]
                _unpack(x, cr, ci, N)
                count = 0
                if _cholesky(cr, ci, lr, li, N) != 0:
                    iters[0] = it
                    return -1
            else:
                iters[0] = it
                return -1
        status = _apply_map(xr, xi, lr, li, yr, yi, g, scale, rho, N)
        if status != 0:
            iters[0] = it
            return status
        fn = 0.0
        gn = 0.0
        for k in range(M):
            fn += wt[k] * (g[k] - x[k]) * (g[k] - x[k])
            gn += wt[k] * g[k] * g[k]
        resid[0] = sqrt(fn / gn)
        if resid[0] <= tol or depth == 0:
            for k in range(M):
                x[k] = g[k]
            _unpack(x, cr, ci, N)
            if resid[0] <= tol:
                iters[0] = it + 1
                return 0
            continue
        for k in range(M):
            Gh[head, k] = g[k]
            Fh[head, k] = g[k] - x[k]
        head = (head + 1) % hist
        if count < hist:
            count += 1
        if count == 1:
            for k in range(M):
                x[k] = g[k]
        else:
            # differences of consecutive residuals, oldest first
            for j in range(count - 1):
                a = (head - count + j + 2 * hist) % hist
                b2 = (a + 1) % hist
                for k in range(M):
                    dF[j, k] = Fh[b2, k] - Fh[a, k]
            slot = (head + hist - 1) % hist
            tr_gram = 0.0
            for a in range(count - 1):
                for b2 in range(a + 1):
                    gram[a, b2] = _dot(dF[a], dF[b2], wt, M)
                    gram[b2, a] = gram[a, b2]
                tr_gram += gram[a, a]
                rhs[a] = _dot(dF[a], Fh[slot], wt, M)
            for a in range(count - 1):
                gram[a, a] += RIDGE * tr_gram / (count - 1)
            if _small_solve(gram, rhs, count - 1) != 0:
                count = 1
                for k in range(M):
                    x[k] = g[k]
            else:
                for k in range(M):
                    x[k] = g[k]
                for j in range(count - 1):
                    a = (head - count + j + 2 * hist) % hist
                    b2 = (a + 1) % hist
                    for k in range(M):
                        x[k] -= rhs[j] * (Gh[b2, k] - Gh[a, k])
        _unpack(x, cr, ci, N)
    # budget exhausted: return the last image, which is PD by construction
    _unpack(g, cr, ci, N)
    iters[0] = max_iter
    return 0


def rte_fixed_point(X, double rho, double tol, int max_iter, init=None, int depth=3):
    """Iterate the RTE map from ``init`` (identity if None).

    Returns ``(C, iterations, residual)`` where the residual is the relative
    Frobenius norm of ``T(C) - C``. Raises ``LinAlgError`` when an image
    loses positive definiteness or a sample has zero norm.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}], got {depth}")
    X = np.asarray(X, dtype=np.complex128)
    cdef int N = X.shape[0]
    cdef int P = N * (N + 1) // 2
    cdef double[:, ::1] xr = np.ascontiguousarray(X.real.T)
    cdef double[:, ::1] xi = np.ascontiguousarray(X.imag.T)
    if init is None:
        C0 = np.eye(N, dtype=np.complex128)
    else:
        C0 = np.asarray(init, dtype=np.complex128)
    cdef double[:, ::1] cr = np.ascontiguousarray(C0.real)
    cdef double[:, ::1] ci = np.ascontiguousarray(C0.imag)
    cdef double[:, ::1] lr = np.zeros((N, N))
    cdef double[:, ::1] li = np.zeros((N, N))
    cdef double[::1] yr = np.zeros(N)
    cdef double[::1] yi = np.zeros(N)
    cdef double[::1] x = np.zeros(2 * P)
    cdef double[::1] g = np.zeros(2 * P)
    wt_np = np.full(2 * P, 2.0)
    diag = np.cumsum(np.arange(1, N + 1)) - 1
    wt_np[diag] = 1.0
    wt_np[P + diag] = 0.0
    cdef double[::1] wt = wt_np
    cdef double[:, ::1] Gh = np.zeros((depth + 1, 2 * P))
    cdef double[:, ::1] Fh = np.zeros((depth + 1, 2 * P))
    cdef double[:, ::1] dF = np.zeros((max(depth, 1), 2 * P))
    cdef double[:, ::1] gram = np.zeros((max(depth, 1), max(depth, 1)))
    cdef double[::1] rhs = np.zeros(max(depth, 1))
    cdef int iters = 0, status
    cdef double resid = np.inf
    with nogil:
        status = _iterate(xr, xi, cr, ci, lr, li, yr, yi, x, g, wt, Gh, Fh, dF, gram, rhs,
                          rho, tol, max_iter, depth, &iters, &resid)
    if status == -1:
        raise np.linalg.LinAlgError("RTE iterate is not positive definite")
    if status == -2:
        raise np.linalg.LinAlgError("zero-norm sample in RTE data")
    return np.asarray(cr) + 1j * np.asarray(ci), iters, resid
