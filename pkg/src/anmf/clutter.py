"""Gaussian and compound-Gaussian (K-distributed) clutter samplers.

A clutter vector is ``x = sqrt(tau) * C^{1/2} w``. In the Gaussian case
``tau = 1`` and ``w`` is standard circular complex normal; in the K case
``tau ~ Gamma(nu, 1/nu)`` and ``w`` is a Gaussian draw rescaled to
``|w|^2 = N``.

Randomness is drawn from per-trial substreams keyed by
``(seed, stream, trial, role)`` so that any trial can be regenerated on its
own, in any order.
"""
from dataclasses import dataclass

import numpy as np

from anmf.errors import InvalidParameterError
from anmf.io import read_complex_csv, write_complex_csv
from anmf.model import TextureModel

__all__ = [
    "ClutterBatch",
    "TextureModel",
    "trial_rng",
    "sample_speckle",
    "sample_texture",
    "generate_secondary",
    "generate_primary",
    "dump_batch_csv",
    "load_batch_csv",
]

ROLES = {"secondary": 0, "primary": 1, "texture": 2}
MAIN_STREAM = 0
CALIBRATION_STREAM = 1


def trial_rng(seed, trial, role, stream=MAIN_STREAM):
    """Independent generator for one (trial, role) pair."""
    try:
        role_id = ROLES[role]
    except KeyError:
        raise InvalidParameterError(f"unknown RNG role {role!r}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(trial), role_id))
    return np.random.default_rng(ss)


def sample_speckle(rng, N, mode="gaussian", count=None):
    """Draw speckle vector(s) ``w``; ``count`` columns if given.

    ``gaussian``: i.i.d. CN(0, 1) entries. ``norm_constrained``: the same
    draw rescaled so each column has ``|w|^2 = N`` exactly.
    """
    shape = (N,) if count is None else (N, count)
    w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)
    if mode == "gaussian":
        return w
    if mode == "norm_constrained":
        return w * np.sqrt(N / np.sum(w.real**2 + w.imag**2, axis=0))
    raise InvalidParameterError(f"unknown speckle mode {mode!r}")


def sample_texture(rng, model, count):
    if count < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count}")
    if model.is_gaussian:
        return np.ones(count)
    return rng.gamma(model.shape, 1.0 / model.shape, size=count)


def _speckle_mode(texture):
    return "gaussian" if texture.is_gaussian else "norm_constrained"


@dataclass(frozen=True)
class ClutterBatch:
    secondary: np.ndarray  # N x n, columns are samples
    textures: np.ndarray

    @property
    def n(self):
        return self.secondary.shape[1]


def generate_secondary(rng, C_sqrt, texture, n, texture_rng=None):
    """``n`` signal-free samples ``x_i = sqrt(tau_i) C^{1/2} w_i`` as columns."""
    N = C_sqrt.shape[0]
    w = sample_speckle(rng, N, _speckle_mode(texture), count=n)
    tau = sample_texture(texture_rng if texture_rng is not None else rng, texture, n)
    return ClutterBatch(C_sqrt @ w * np.sqrt(tau), tau)


def generate_primary(rng, C_sqrt, texture, p, a, hypothesis, clutter=None):
    """Primary observation under ``"H0"`` (clutter only) or ``"H1"``.

    Under H1 the target ``(a / sqrt(N)) p`` is added. ``clutter`` overrides
    the random draw (used in tests).
    """
    if hypothesis not in ("H0", "H1"):
        raise InvalidParameterError(f"hypothesis must be 'H0' or 'H1', got {hypothesis!r}")
    N = C_sqrt.shape[0]
    if clutter is None:
        w = sample_speckle(rng, N, _speckle_mode(texture))
        tau = sample_texture(rng, texture, 1)[0]
        x = np.sqrt(tau) * (C_sqrt @ w)
    else:
        x = np.asarray(clutter, dtype=complex)
    if hypothesis == "H0":
        return x
    return (a / np.sqrt(N)) * p + x


def dump_batch_csv(path, batch):
    """Write the secondary samples (N rows, re/im interleaved); textures go in the header."""
    header = "textures: " + " ".join(f"{t:.17g}" for t in batch.textures)
    write_complex_csv(path, batch.secondary, header=header)


def load_batch_csv(path):
    X = read_complex_csv(path)
    textures = np.ones(X.shape[1])
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# textures:"):
        textures = np.array([float(t) for t in first.split(":", 1)[1].split()])
    return ClutterBatch(X, textures)
