"""Backend selection for the hot RTE kernel.

The compiled extension (``anmf._rte_core``) is used when it imports and the
problem is small enough that its unblocked loops beat BLAS; otherwise the
numpy implementation runs. Set ``ANMF_PURE_PYTHON=1`` to force the fallback.
"""
import os

from anmf import _rte_py

try:
    if os.environ.get("ANMF_PURE_PYTHON"):
        raise ImportError("compiled kernel disabled by ANMF_PURE_PYTHON")
    from anmf import _rte_core
except ImportError:
    _rte_core = None

HAVE_COMPILED = _rte_core is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"

# Above this dimension zgemm in the numpy path wins (see benchmarks/).
COMPILED_MAX_DIM = 40


def rte_fixed_point(X, rho, tol, max_iter, init=None, depth=3, backend=None):
    """Run the RTE fixed point on the selected backend.

    ``depth`` is the Anderson history length (0 gives the plain iteration).
    ``backend`` may be ``"compiled"``, ``"python"`` or None (automatic).
    """
    if backend is None:
        use_compiled = HAVE_COMPILED and X.shape[0] <= COMPILED_MAX_DIM
    elif backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled RTE kernel is not available")
        use_compiled = True
    elif backend == "python":
        use_compiled = False
    else:
        raise ValueError(f"unknown backend {backend!r}")
    impl = _rte_core if use_compiled else _rte_py
    return impl.rte_fixed_point(X, rho, tol, max_iter, init, depth)
