import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from starcomp.channel import (
    ChannelSet,
    correlation_root,
    dump_channels,
    generate_channels,
    load_channels,
    path_loss,
    ula_steering,
    ura_steering,
)
from starcomp.scenario import build_geometry, desk_config, make_rng

from conftest import channels_for


def test_path_loss_values():
    assert path_loss(1.0, 2.2, 1e-3, 1.0) == pytest.approx(1e-3)
    assert path_loss(3.0, 4.0, 0.2, 3.0) == pytest.approx(0.2)
    assert path_loss(10.0, 2.0, 1.0, 1.0) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        path_loss(0.0, 2.0, 1.0)


def test_ula_steering():
    np.testing.assert_allclose(ula_steering(5, 0.0), np.ones(5))
    np.testing.assert_allclose(ula_steering(2, 1.0), [1.0, -1.0], atol=1e-15)


def test_ura_broadside_and_kron():
    np.testing.assert_allclose(ura_steering(4, 3, [1.0, 0.0, 0.0]), np.ones(12))
    d = np.array([0.3, -0.5, 0.2])
    d /= np.linalg.norm(d)
    a = ura_steering(2, 2, d)
    direct = [np.exp(1j * np.pi * (iy * d[1] + iz * d[2])) for iz in range(2) for iy in range(2)]
    np.testing.assert_allclose(a, direct)


@given(st.integers(1, 32), st.floats(-1, 1))
def test_ula_unit_modulus(N, c):
    np.testing.assert_allclose(np.abs(ula_steering(N, c)), 1.0)


@given(st.integers(1, 6), st.integers(1, 6), st.floats(-1, 1), st.floats(-1, 1))
def test_ura_unit_modulus(My, Mz, y, z):
    np.testing.assert_allclose(np.abs(ura_steering(My, Mz, [0.1, y, z])), 1.0)


def test_correlation_root():
    np.testing.assert_array_equal(correlation_root(4, 0.0), np.eye(4))
    S = correlation_root(2, 0.5)
    np.testing.assert_allclose(S @ S.conj().T, [[1, 0.5], [0.5, 1]], atol=1e-10)
    with pytest.raises(ValueError):
        correlation_root(3, 1.0)


@given(st.integers(1, 12), st.floats(0, 0.95))
def test_correlation_unit_diagonal(M, rho):
    S = correlation_root(M, rho)
    np.testing.assert_allclose(np.diag(S @ S.conj().T).real, 1.0, atol=1e-10)


def test_shapes_and_determinism():
    c = desk_config()
    a = channels_for(c, seed=4)
    b = channels_for(c, seed=4)
    assert a.h.shape == (8, 16) and a.g.shape == (8, 16) and a.G.shape == (16, 16)
    assert a.K_r == 4 and a.K_t == 4
    for x, y in ((a.h, b.h), (a.g, b.g), (a.G, b.G)):
        np.testing.assert_array_equal(x, y)
        assert np.all(np.isfinite(x))


def test_channelset_shape_checks():
    with pytest.raises(ValueError):
        ChannelSet(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((3, 5)), 1)
    with pytest.raises(ValueError):
        ChannelSet(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((3, 4)), 3)


def test_pure_los_is_deterministic_and_exact():
    c = desk_config(kappa_wr_db=200.0, kappa_rf_db=200.0, kappa_rwf_db=200.0, kappa_twf_db=200.0)
    geo = build_geometry(c)
    a = generate_channels(c, geo, make_rng(1, 0))
    b = generate_channels(c, geo, make_rng(2, 0))
    np.testing.assert_array_equal(a.G, b.G)
    np.testing.assert_array_equal(a.h, b.h)
    ris, fc = geo.ris_position, geo.fc_position
    L = path_loss(np.linalg.norm(ris - fc), c.alpha_rf, c.c0)
    np.testing.assert_allclose(np.abs(a.G), np.sqrt(L))
    # line-of-sight G is rank one
    s = np.linalg.svd(a.G, compute_uv=False)
    assert s[1] < 1e-10 * s[0]


def test_link_power_matches_path_loss():
    # kappa = 0 everywhere: pure Rayleigh, E||h_k||^2 / N = L_k
    c = desk_config(kappa_wr_db=-400.0, kappa_rf_db=-400.0, kappa_rwf_db=-400.0, kappa_twf_db=-400.0)
    geo = build_geometry(c)
    acc_h = np.zeros(c.K)
    acc_g = np.zeros(c.K)
    acc_G = 0.0
    n = 10_000
    for i in range(n):
        ch = generate_channels(c, geo, make_rng(11, i))
        acc_h += np.sum(np.abs(ch.h) ** 2, axis=1)
        acc_g += np.sum(np.abs(ch.g) ** 2, axis=1)
        acc_G += np.sum(np.abs(ch.G) ** 2)
    fc, ris = geo.fc_position, geo.ris_position
    for k, pos in enumerate(geo.wd_positions):
        alpha = c.alpha_rwf if k < c.K_r else c.alpha_twf
        L = path_loss(np.linalg.norm(pos - fc), alpha, c.c0)
        assert acc_h[k] / n / c.N == pytest.approx(L, rel=0.05)
        L = path_loss(np.linalg.norm(pos - ris), c.alpha_wr, c.c0)
        assert acc_g[k] / n / c.M == pytest.approx(L, rel=0.05)
    L = path_loss(np.linalg.norm(ris - fc), c.alpha_rf, c.c0)
    assert acc_G / n / (c.N * c.M) == pytest.approx(L, rel=0.05)


def test_rician_power_with_correlation():
    c = desk_config(corr_rho=0.6)
    geo = build_geometry(c)
    n = 4000
    acc = 0.0
    for i in range(n):
        acc += np.sum(np.abs(generate_channels(c, geo, make_rng(12, i)).h[0]) ** 2)
    L = path_loss(np.linalg.norm(geo.wd_positions[0] - geo.fc_position), c.alpha_rwf, c.c0)
    assert acc / n / c.N == pytest.approx(L, rel=0.05)


def test_channel_csv_roundtrip(tmp_path):
    ch = channels_for(desk_config(), seed=2)
    dump_channels(ch, tmp_path / "ch.csv")
    back = load_channels(tmp_path / "ch.csv")
    assert back.K_r == ch.K_r
    for x, y in ((ch.h, back.h), (ch.g, back.g), (ch.G, back.G)):
        np.testing.assert_array_equal(x, y)
