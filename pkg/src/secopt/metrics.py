"""Exact performance metrics and Monte-Carlo oracles for the ergodic Eve rates."""
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import eve_channel_sample

LN2 = np.log(2.0)


@dataclass
class DesignVariables:
    W: np.ndarray        # M x (K+1), column 0 is the common precoder
    z: np.ndarray        # M
    theta: np.ndarray    # N
    u: np.ndarray        # M, unit norm
    r: np.ndarray        # K, common-rate split (nats)

    def copy(self, **kw):
        d = dict(W=self.W.copy(), z=self.z.copy(), theta=self.theta.copy(),
                 u=self.u.copy(), r=self.r.copy())
        d.update(kw)
        return DesignVariables(**d)

    @property
    def K(self):
        return self.W.shape[1] - 1

    def check(self):
        assert abs(np.linalg.norm(self.u) - 1) <= 1e-9
        assert np.all(self.r >= 0)

    def to_json(self):
        c = lambda a: np.stack([np.real(a), np.imag(a)], -1).tolist()
        return {"W": c(self.W), "z": c(self.z), "theta": c(self.theta), "u": c(self.u),
                "r": np.asarray(self.r).tolist()}


@dataclass
class SinrReport:
    gamma_s0_k: np.ndarray
    gamma_k: np.ndarray
    gamma_s0_E: float = None
    gamma_kE: np.ndarray = None


@dataclass
class SecrecyReport:
    epsr_k: np.ndarray
    min_epsr: float
    ecsr_margin: float
    radar_snr: float
    bs_power: float
    ris_power: float
    rate_k: np.ndarray = None
    rate_s0_k: np.ndarray = None


def _effective_gains(vars, Hbar):
    """|theta^H Hbar_k x|^2 for every user k and every column x of [W, z]."""
    X = np.column_stack([vars.W, vars.z])
    heff = np.einsum("n,knm->km", vars.theta.conj(), Hbar)     # K x M
    return np.abs(heff @ X) ** 2                              # K x (K+2)


def user_noise(vars, norm, params):
    # sigma_bar_R,k = sigma_R^2 ||theta^H diag(hbar_Rk^H)||^2 + 1
    return params.sigma_r2 * (np.abs(norm.hbar_R) ** 2 @ np.abs(vars.theta) ** 2) + 1.0


def eve_noise(theta, h_re, params):
    """sigma_bar_E for one or many Eve draws (rows of h_re)."""
    return 1.0 + params.sigma_r2 / params.sigma_e2 * (np.abs(h_re) ** 2 @ np.abs(theta) ** 2)


def _eve_gains(vars, G, h_re, sigma_e2):
    X = np.column_stack([vars.W, vars.z])
    B = vars.theta.conj()[:, None] * (G @ X)      # conj(theta) o G x
    return np.abs(np.atleast_2d(h_re).conj() @ B) ** 2 / sigma_e2


def _eve_sinrs(P, sig):
    # P: draws x (K+2) columns [w0, w1..wK, z]
    K = P.shape[1] - 2
    total = P.sum(axis=1) + sig
    g0 = P[:, 0] / (total - P[:, 0])
    gk = P[:, 1:K + 1] / (total[:, None] - P[:, 1:K + 1])
    return g0, gk


def sinr_report(vars, norm, params, eve_draw=None):
    P = _effective_gains(vars, norm.Hbar)
    K = P.shape[0]
    sig = user_noise(vars, norm, params)
    priv = P[:, 1:K + 1]
    own = priv[np.arange(K), np.arange(K)]
    interf_priv = priv.sum(axis=1) - own + P[:, K + 1] + sig
    g_k = own / interf_priv
    g0 = P[:, 0] / (priv.sum(axis=1) + P[:, K + 1] + sig)
    rep = SinrReport(g0, g_k)
    if eve_draw is not None:
        PE = _eve_gains(vars, norm.raw.G, eve_draw, params.sigma_e2)
        sE = eve_noise(vars.theta, np.atleast_2d(eve_draw), params)
        e0, ek = _eve_sinrs(PE, sE)
        rep.gamma_s0_E = float(e0[0])
        rep.gamma_kE = ek[0]
    return rep


def radar_matrices(vars, channels, params):
    """(H_T, H_0, H_1) of the radar echo model."""
    G = channels.G
    th, h = vars.theta, channels.h_RT
    H1 = G.conj().T * th[None, :]                    # G^H Phi
    H0 = np.outer(H1 @ h, th * h)                   # G^H Phi h h^T Phi
    HT = H0 @ G
    return HT, H0, H1


def radar_snr(vars, channels, params):
    HT, H0, H1 = radar_matrices(vars, channels, params)
    u = vars.u
    X = np.column_stack([vars.W, vars.z])
    num = params.zeta2 * np.sum(np.abs(u.conj() @ HT @ X) ** 2)
    den = (params.zeta2 * params.sigma_r2 * np.sum(np.abs(u.conj() @ H0) ** 2)
           + params.sigma_r2 * np.sum(np.abs(u.conj() @ H1) ** 2)
           + params.sigma2 * np.vdot(u, u).real)
    return float(num / den)


def ris_power(vars, channels, params):
    th, h, G = vars.theta, channels.h_RT, channels.G
    X = np.column_stack([vars.W, vars.z])
    PhiGX = th[:, None] * (G @ X)
    th_h = th * h
    # Phi H_RT Phi G x = (theta o h) (theta o h)^T G x
    echo = np.outer(th_h, th_h @ (G @ X))
    zeta2, s2 = params.zeta2, params.sigma_r2
    return float(zeta2 * np.sum(np.abs(echo) ** 2) + np.sum(np.abs(PhiGX) ** 2)
                 + 2 * s2 * np.sum(np.abs(th) ** 2)
                 + zeta2 * s2 * np.sum(np.abs(th_h) ** 2) ** 2)


def bs_power(vars):
    return float(np.sum(np.abs(vars.W) ** 2) + np.sum(np.abs(vars.z) ** 2))


def user_rates(vars, norm, params):
    """(R_s0,k, R_k) in nats."""
    rep = sinr_report(vars, norm, params)
    return np.log1p(rep.gamma_s0_k), np.log1p(rep.gamma_k)


@dataclass
class ErgodicEveRates:
    common: float          # bits
    private: np.ndarray    # bits, length K
    common_se: float = 0.0
    private_se: np.ndarray = None


def ergodic_eve_rates_mc(vars, channels, cfg, rng, draws, params=None, chunk=20000):
    from .config import to_linear
    params = to_linear(cfg) if params is None else params
    K = vars.K
    s0 = np.zeros(2)
    sk = np.zeros((2, K))
    done = 0
    while done < draws:
        n = min(chunk, draws - done)
        h = eve_channel_sample(cfg, rng, size=n, params=params)
        PE = _eve_gains(vars, channels.G, h, params.sigma_e2)
        sE = eve_noise(vars.theta, h, params)
        e0, ek = _eve_sinrs(PE, sE)
        r0 = np.log2(1 + e0)
        rk = np.log2(1 + ek)
        s0 += [r0.sum(), (r0 ** 2).sum()]
        sk += np.stack([rk.sum(0), (rk ** 2).sum(0)])
        done += n
    m0, mk = s0[0] / draws, sk[0] / draws
    if draws > 1:
        se0 = np.sqrt(max(s0[1] / draws - m0 ** 2, 0) / (draws - 1))
        sek = np.sqrt(np.clip(sk[1] / draws - mk ** 2, 0, None) / (draws - 1))
    else:
        se0, sek = 0.0, np.zeros(K)
    return ErgodicEveRates(float(m0), mk, float(se0), sek)


def ergodic_eve_rates_approx(vars, norm, eve_moment, params):
    """Deterministic Eve rates ln(1+l_E) - ln(sigma_E + sum_j w_j^H G_E w_j), in nats.

    This is the value both surrogate families reproduce at their expansion point.
    """
    G = norm.raw.G
    GE = eve_moment.G_hat(G, vars.theta)
    sbar = eve_moment.sigma_bar(vars.theta)
    X = np.column_stack([vars.W, vars.z])
    p = np.real(np.einsum("mi,mn,ni->i", X.conj(), GE, X))
    total = sbar + p.sum()
    K = vars.K
    common = np.log(total) - np.log(total - p[0])
    private = np.log(total) - np.log(total - p[1:K + 1])
    return float(common), private


def secrecy_report(vars, norm, erg_rates, params):
    """Reporting in bits; erg_rates is an ErgodicEveRates (bits)."""
    Rs0, Rk = user_rates(vars, norm, params)
    Rs0, Rk = Rs0 / LN2, Rk / LN2
    r_bits = np.asarray(vars.r) / LN2
    epsr = r_bits + np.maximum(0.0, Rk - erg_rates.private)
    ecsr_margin = float(np.min(Rs0) - erg_rates.common - r_bits.sum())
    return SecrecyReport(epsr, float(epsr.min()), ecsr_margin,
                         radar_snr(vars, norm.raw, params), bs_power(vars),
                         ris_power(vars, norm.raw, params), Rk, Rs0)
