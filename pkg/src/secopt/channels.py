"""Channel realizations and the closed-form second moment of the RIS-Eve link."""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .config import to_linear


def steering_vector(angle, count, spacing=0.5):
    n = np.arange(count)
    return np.exp(1j * 2 * np.pi * spacing * n * np.sin(angle))


def pathloss(distance, params, exponent):
    return params.pathloss_ref * (distance / params.d0) ** (-exponent)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_rician(rx_angle, tx_angle, rx_count, tx_count, distance, params,
                  exponent, rng, spacing=0.5):
    """Rician fading with a ULA steering LOS part.

    With tx_angle=None a length rx_count vector is returned.
    """
    kappa = params.kappa
    amp = np.sqrt(pathloss(distance, params, exponent))
    a_rx = steering_vector(rx_angle, rx_count, spacing)
    if tx_angle is None:
        los = a_rx
        nlos = crandn(rng, rx_count)
    else:
        a_tx = steering_vector(tx_angle, tx_count, spacing)
        los = np.outer(a_rx, a_tx.conj())
        nlos = crandn(rng, rx_count, tx_count)
    if np.isinf(kappa):
        return amp * los
    return amp * (np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * nlos)


def _angle(src, dst):
    d = np.asarray(dst, float) - np.asarray(src, float)
    return np.arctan2(d[1], d[0]), np.hypot(d[0], d[1])


@dataclass
class ChannelSet:
    G: np.ndarray          # N x M, BS -> RIS
    h_Rk: np.ndarray       # K x N, row k is the RIS -> user k channel
    h_RT: np.ndarray       # N, RIS -> target
    user_positions: np.ndarray

    @property
    def H_RT(self):
        return np.outer(self.h_RT, self.h_RT)

    @property
    def N(self):
        return self.G.shape[0]

    @property
    def M(self):
        return self.G.shape[1]

    @property
    def K(self):
        return self.h_Rk.shape[0]

    def to_json(self):
        def c(a):
            a = np.asarray(a)
            return np.stack([a.real, a.imag], axis=-1).tolist()
        return {"G": c(self.G), "h_Rk": c(self.h_Rk), "h_RT": c(self.h_RT),
                "user_positions": np.asarray(self.user_positions).tolist()}

    @classmethod
    def from_json(cls, d):
        def c(a):
            a = np.asarray(a, float)
            return a[..., 0] + 1j * a[..., 1]
        return cls(c(d["G"]), c(d["h_Rk"]), c(d["h_RT"]),
                   np.asarray(d["user_positions"], float))


def sample_user_positions(cfg, rng, count=None):
    count = cfg.K if count is None else count
    r = cfg.user_disk_radius * np.sqrt(rng.uniform(size=count))
    phi = rng.uniform(0, 2 * np.pi, size=count)
    c = np.asarray(cfg.user_disk_center)
    return c + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


def sample_scene(cfg, rng, params=None):
    params = to_linear(cfg) if params is None else params
    sp = cfg.element_spacing_wavelengths
    bs, ris = np.asarray(cfg.bs_pos), np.asarray(cfg.ris_pos)
    users = sample_user_positions(cfg, rng)

    # BS -> RIS: arrival at the RIS from the BS, departure at the BS toward the RIS
    aoa, d_br = _angle(ris, bs)
    aod, _ = _angle(bs, ris)
    G = sample_rician(aoa, aod, cfg.N, cfg.M, d_br, params, cfg.alpha_br, rng, sp)

    h_Rk = np.empty((cfg.K, cfg.N), complex)
    for k in range(cfg.K):
        ang, d = _angle(ris, users[k])
        h_Rk[k] = sample_rician(ang, None, cfg.N, 1, max(d, 1e-9), params, cfg.alpha_ru, rng, sp)

    h_RT = sample_rician(cfg.target_angle, None, cfg.N, 1, cfg.target_range, params,
                         cfg.alpha_rt, rng, sp)
    return ChannelSet(G, h_Rk, h_RT, users)


@dataclass
class EveMoment:
    H_hat: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray     # column n is e_n
    sigma_e2: float
    sigma_r2: float

    @property
    def J_frown(self):
        return self.eigvecs * np.sqrt(self.eigvals)

    @property
    def D_tilde(self):
        # stacked diagonals: row n holds diag(D_tilde_n) = sqrt(lam_n) conj(e_n)
        return (self.eigvecs * np.sqrt(self.eigvals)).T.conj()

    @property
    def J_tilde_E(self):
        d = (np.abs(self.eigvecs) ** 2) @ self.eigvals
        return np.diag(self.sigma_r2 / self.sigma_e2 * d)

    def sigma_bar(self, theta):
        return 1.0 + np.real(theta.conj() @ self.J_tilde_E @ theta)

    def G_hat(self, G, theta):
        PhiG = G * theta.conj()[:, None]          # Phi^H G
        out = PhiG.conj().T @ self.H_hat @ PhiG / self.sigma_e2
        return 0.5 * (out + out.conj().T)


def eve_prefactor(cfg, params):
    a = cfg.alpha_re
    d1, d2 = cfg.eve_d1, cfg.eve_d2
    return (cfg.d0 ** a * 2 * params.pathloss_ref * (d1 ** (2 - a) - d2 ** (2 - a))
            / ((1 + params.kappa) * (d2 ** 2 - d1 ** 2) * (a - 2)))


def eve_second_moment(cfg, params=None, n_theta=None):
    if cfg.alpha_re == 2:
        raise ValueError("alpha_re = 2 is a pole of the Eve moment formula")
    params = to_linear(cfg) if params is None else params
    n_theta = cfg.n_theta if n_theta is None else n_theta
    N = cfg.N
    t1, t2 = cfg.eve_theta1, cfg.eve_theta2
    dth = (t2 - t1) / n_theta
    grid = t1 + dth * np.arange(n_theta + 1)
    A = steering_vector(grid[:, None], N, cfg.element_spacing_wavelengths)  # (n+1) x N
    wts = np.full(n_theta + 1, 2.0)
    wts[[0, -1]] = 1.0
    S = (A.T * wts) @ A.conj()
    kappa = params.kappa
    H = eve_prefactor(cfg, params) * (kappa * dth / (2 * (t2 - t1)) * S + np.eye(N))
    H = 0.5 * (H + H.conj().T)
    lam, E = linalg.eigh(H)
    lam = np.clip(lam, 0.0, None)
    return EveMoment(H, lam, E, params.sigma_e2, params.sigma_r2)


def sample_eve_geometry(cfg, rng, size=None):
    d1, d2 = cfg.eve_d1, cfg.eve_d2
    d = np.sqrt(d1 ** 2 + rng.uniform(size=size) * (d2 ** 2 - d1 ** 2))
    th = rng.uniform(cfg.eve_theta1, cfg.eve_theta2, size=size)
    return d, th


def eve_channel_sample(cfg, rng, size=None, params=None):
    """RIS -> Eve channel draw(s); returns (size, N) when size is given."""
    params = to_linear(cfg) if params is None else params
    if size is None:
        d, th = sample_eve_geometry(cfg, rng)
        return sample_rician(th, None, cfg.N, 1, d, params, cfg.alpha_re, rng,
                             cfg.element_spacing_wavelengths)
    d, th = sample_eve_geometry(cfg, rng, size)
    kappa = params.kappa
    amp = np.sqrt(pathloss(d, params, cfg.alpha_re))[:, None]
    los = steering_vector(th[:, None], cfg.N, cfg.element_spacing_wavelengths)
    nlos = crandn(rng, size, cfg.N)
    return amp * (np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * nlos)


@dataclass
class NormalizedChannels:
    Hbar: np.ndarray       # K x N x M, Hbar_k = sigma_k^-1 diag(h_Rk^H) G
    hbar_R: np.ndarray     # K x N, sigma_k^-1 h_Rk^H entries
    raw: ChannelSet
    sigma_e: float

    def Hbar_E(self, h_re):
        return (h_re.conj() / self.sigma_e)[:, None] * self.raw.G


def normalize(channels, params):
    sk = np.sqrt(params.sigma_k2)
    hbar = channels.h_Rk.conj() / sk
    Hbar = hbar[:, :, None] * channels.G[None, :, :]
    return NormalizedChannels(Hbar, hbar, channels, np.sqrt(params.sigma_e2))
