import numpy as np
import pytest
from scipy import stats

from anmf.clutter import (ClutterBatch, dump_batch_csv, generate_primary, generate_secondary, load_batch_csv,
                          sample_speckle, sample_texture, trial_rng)
from anmf.errors import InvalidParameterError
from anmf.estimators import scm
from anmf.model import TextureModel, build_toeplitz_covariance, hermitian_sqrt, steering_vector


def test_norm_constrained_speckle_has_exact_norm(rng):
    w = sample_speckle(rng, 12, "norm_constrained", count=50)
    np.testing.assert_allclose(np.sum(np.abs(w) ** 2, axis=0), 12.0, rtol=1e-13)


def test_gaussian_speckle_unit_power(rng):
    w = sample_speckle(rng, 8, "gaussian", count=100_000)
    assert 0.99 <= np.mean(np.sum(np.abs(w) ** 2, axis=0) / 8) <= 1.01
    # circular: real and imaginary parts each carry half the power
    assert np.mean(w.real**2) == pytest.approx(0.5, abs=0.01)
    assert abs(np.mean(w**2)) < 0.01


def test_speckle_determinism():
    a = sample_speckle(trial_rng(7, 3, "primary"), 5)
    b = sample_speckle(trial_rng(7, 3, "primary"), 5)
    np.testing.assert_array_equal(a, b)


def test_substreams_are_distinct():
    a = sample_speckle(trial_rng(7, 3, "primary"), 5)
    b = sample_speckle(trial_rng(7, 3, "secondary"), 5)
    c = sample_speckle(trial_rng(7, 4, "primary"), 5)
    d = sample_speckle(trial_rng(7, 3, "primary", stream=1), 5)
    for other in (b, c, d):
        assert not np.allclose(a, other)


def test_unknown_role_and_mode(rng):
    with pytest.raises(InvalidParameterError):
        trial_rng(0, 0, "tertiary")
    with pytest.raises(InvalidParameterError):
        sample_speckle(rng, 3, "laplace")


def test_texture_one():
    np.testing.assert_array_equal(sample_texture(None, TextureModel.one(), 5), np.ones(5))


def test_texture_gamma_moments(rng):
    tau = sample_texture(rng, TextureModel.gamma_k(0.5), 1_000_000)
    assert 0.99 <= tau.mean() <= 1.01
    assert tau.var() == pytest.approx(2.0, rel=0.05)


def test_texture_concentrates_for_large_shape(rng):
    assert sample_texture(rng, TextureModel.gamma_k(1e6), 10_000).var() < 1e-5


def test_texture_validation(rng):
    with pytest.raises(InvalidParameterError):
        sample_texture(rng, TextureModel.one(), 0)
    with pytest.raises(InvalidParameterError):
        TextureModel(-1.0)


def test_secondary_identity_mixing_is_standard_gaussian(rng):
    batch = generate_secondary(rng, np.eye(4), TextureModel.one(), 20_000)
    assert isinstance(batch, ClutterBatch) and batch.n == 20_000
    np.testing.assert_array_equal(batch.textures, 1.0)
    np.testing.assert_allclose(scm(batch.secondary), np.eye(4), atol=0.05)
    # each real component is N(0, 1/2)
    ks = stats.kstest(batch.secondary[0].real, "norm", args=(0, np.sqrt(0.5)))
    assert ks.pvalue > 1e-3


def test_secondary_scm_law_of_large_numbers(rng):
    C = build_toeplitz_covariance(0.5, 4)
    X = generate_secondary(rng, hermitian_sqrt(C), TextureModel.one(), 10_000).secondary
    assert np.linalg.norm(scm(X) - C) <= 0.05 * np.linalg.norm(C)


def test_k_clutter_is_heavier_tailed(rng):
    S = hermitian_sqrt(build_toeplitz_covariance(0.5, 4))
    g = generate_secondary(rng, S, TextureModel.one(), 50_000).secondary
    k = generate_secondary(rng, S, TextureModel.gamma_k(0.5), 50_000).secondary
    assert stats.kurtosis(np.sum(np.abs(k) ** 2, axis=0)) > stats.kurtosis(np.sum(np.abs(g) ** 2, axis=0)) + 1


def test_k_clutter_structure(rng):
    N = 6
    batch = generate_secondary(rng, np.eye(N), TextureModel.gamma_k(2.0), 100)
    # with identity mixing the norm is exactly sqrt(tau * N)
    np.testing.assert_allclose(np.sum(np.abs(batch.secondary) ** 2, axis=0), batch.textures * N, rtol=1e-12)
    assert np.all(batch.textures > 0)


def test_primary_h0_h1(rng):
    N = 8
    p = steering_vector(20, N)
    y = generate_primary(rng, np.eye(N), TextureModel.one(), p, 0.9, "H1", clutter=np.zeros(N))
    np.testing.assert_allclose(y, 0.9 / np.sqrt(N) * p)
    x = np.arange(N, dtype=complex)
    np.testing.assert_array_equal(generate_primary(rng, np.eye(N), TextureModel.one(), p, 0.9, "H0", clutter=x), x)
    with pytest.raises(InvalidParameterError):
        generate_primary(rng, np.eye(N), TextureModel.one(), p, 0.9, "H2")


def test_primary_zero_amplitude_matches_h0():
    N = 4
    p = steering_vector(10, N)
    y0 = generate_primary(trial_rng(1, 0, "primary"), np.eye(N), TextureModel.one(), p, 0.0, "H0")
    y1 = generate_primary(trial_rng(1, 0, "primary"), np.eye(N), TextureModel.one(), p, 0.0, "H1")
    np.testing.assert_array_equal(y0, y1)


def test_primary_mean_under_h1(rng):
    N, a, m = 6, 0.9, 10_000
    p = steering_vector(20, N)
    S = hermitian_sqrt(build_toeplitz_covariance(0.5j, N))
    Y = np.stack([generate_primary(rng, S, TextureModel.one(), p, a, "H1") for _ in range(m)])
    err = np.abs(Y.mean(axis=0) - a / np.sqrt(N) * p)
    assert np.all(err < 4.5 / np.sqrt(m))  # each entry has unit variance


def test_batch_csv_round_trip(tmp_path, rng):
    batch = generate_secondary(rng, np.eye(3), TextureModel.gamma_k(0.7), 5)
    path = tmp_path / "batch.csv"
    dump_batch_csv(path, batch)
    back = load_batch_csv(path)
    np.testing.assert_array_equal(back.secondary, batch.secondary)
    np.testing.assert_array_equal(back.textures, batch.textures)
