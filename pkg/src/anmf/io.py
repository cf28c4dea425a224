"""CSV helpers for complex matrices stored as interleaved re/im columns.

A row ``z_0, z_1, ...`` is written as ``re(z_0), im(z_0), re(z_1), im(z_1), ...``.
"""
import numpy as np

from anmf.errors import InvalidParameterError


def read_complex_csv(path):
    raw = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if raw.shape[1] % 2:
        raise InvalidParameterError(f"{path}: odd number of columns ({raw.shape[1]}), expected re/im pairs")
    return raw[:, 0::2] + 1j * raw[:, 1::2]


def write_complex_csv(path, A, header=None):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    out = np.empty((A.shape[0], 2 * A.shape[1]))
    out[:, 0::2] = A.real
    out[:, 1::2] = A.imag
    np.savetxt(path, out, delimiter=",", fmt="%.17g", header=header or "", comments="# ")
