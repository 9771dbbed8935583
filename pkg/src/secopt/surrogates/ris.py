"""RIS-side surrogates: expansion cache, MM quartic majorants and constraints in (theta, r, tau)."""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..metrics import user_noise
from .quadratic import QuadraticConstraint


def lam_max(A):
    A = 0.5 * (A + A.conj().T)
    n = A.shape[0]
    return float(linalg.eigh(A, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


@dataclass
class MMData:
    lam: float           # lambda_D (shift on the complex quartic)
    d: np.ndarray        # 2 (D - lam I) v_t
    D_dd: np.ndarray     # reshape of d, d = vec(D_dd)
    D_bar: np.ndarray    # real 2N x 2N lift
    lam_bar: float
    d_tilde: np.ndarray
    c1r: float
    c2r: float
    pre: float           # v_t^H (lam I - D) v_t, the part of c1r without the norm cap

    @property
    def c1(self):
        return self.c1r + self.c2r

    def value(self, theta):
        """(lam_bar/2) theta^H theta + Re{theta^H d_tilde} + c1."""
        return (0.5 * self.lam_bar * np.real(np.vdot(theta, theta))
                + np.real(np.vdot(theta, self.d_tilde)) + self.c1)

    def pre_relaxation(self, theta, D):
        v = np.kron(theta, theta)
        return (self.lam * np.real(np.vdot(v, v)) + np.real(np.vdot(v, self.d)) + self.pre)


def mm_quartic_majorant(D, theta_t, beta_max):
    """Quadratic majorant in theta of v^H D v, v = theta (x) theta, on |theta_n| <= beta_max.

    The second-order shift by lambda_max(D) bounds the quartic by a form linear in v,
    whose linear part is again a real quadratic in theta and gets a second shift.
    """
    N = len(theta_t)
    v_t = np.kron(theta_t, theta_t)
    D = 0.5 * (D + D.conj().T)
    lam = max(lam_max(D), 0.0)
    d = 2 * (D @ v_t - lam * v_t)
    pre = float(np.real(lam * np.vdot(v_t, v_t) - np.vdot(v_t, D @ v_t)))
    c1r = lam * N ** 2 * beta_max ** 4 + pre
    Ddd = d.reshape(N, N)
    R, I = Ddd.real, Ddd.imag
    Dbar = np.block([[R, I], [I, -R]])
    S = Dbar + Dbar.T
    lam_bar = float(linalg.eigh(S, eigvals_only=True, subset_by_index=[2 * N - 1, 2 * N - 1])[0])
    tb = np.concatenate([theta_t.real, theta_t.imag])
    g = (S - lam_bar * np.eye(2 * N)) @ tb
    d_tilde = g[:N] + 1j * g[N:]
    c2r = float(-tb @ Dbar @ tb + 0.5 * lam_bar * tb @ tb)
    return MMData(lam, d, Ddd, Dbar, lam_bar, d_tilde, c1r, c2r, pre)


@dataclass
class RisExpansion:
    N: int
    K: int
    theta_t: np.ndarray
    X_t: np.ndarray
    u: np.ndarray
    a: np.ndarray           # K x (K+2) x N, a[k, i] = Hbar_k x_i
    alpha: np.ndarray
    beta: np.ndarray
    alpha0: np.ndarray
    beta0: np.ndarray
    A_bar: np.ndarray
    A_bar0: np.ndarray
    B_bar: np.ndarray       # K x N x N
    Psi_E: list
    Psi_0E: np.ndarray
    Xi_inv_E: list
    Xi_inv_0E: np.ndarray
    T_E: list               # Psi Xi^-1 Psi^H
    T_0E: np.ndarray
    u_E: np.ndarray
    u_0E: float
    mu_E: float
    C: list
    P_0E: np.ndarray
    Gamma_E: np.ndarray
    # radar
    A: np.ndarray
    B: np.ndarray
    C_r: np.ndarray
    D: np.ndarray
    c0: float
    mm_radar: MMData
    # power
    J_tilde: np.ndarray
    G_tilde: np.ndarray
    mm_power: MMData
    # constants
    eps_4: np.ndarray
    eps_5: np.ndarray
    eps_bar_5: np.ndarray
    eps_13: np.ndarray
    eps_6: np.ndarray
    eps_7: np.ndarray
    eps_8: float
    eps_14: float
    d_E: list
    D_E: list
    upsilon_0E: list
    V_0E: list

    @property
    def Xi_E(self):
        return [np.eye(P.shape[1]) + np.outer(P.conj().T @ self.theta_t, self.theta_t.conj() @ P)
                for P in self.Psi_E]

    @property
    def C_tilde(self):
        return self.gamma_r * self.C_r + 0.5 * self.mm_radar.lam_bar * np.eye(self.N)


def sm_inverse(p):
    """(I + p p^H)^-1 by Sherman-Morrison."""
    return np.eye(len(p)) - np.outer(p, p.conj()) / (1 + np.real(np.vdot(p, p)))


def _psi(Dt, blocks, sigma_r, sigma_e):
    """sigma_E^-1 [sigma_R D_1..D_N | D_n G x for each listed column]."""
    N = Dt.shape[0]
    parts = [sigma_r * np.hstack([np.diag(Dt[n]) for n in range(N)])]
    for Gx in blocks:            # Gx: N x c
        parts.append(np.hstack([Dt[n][:, None] * Gx for n in range(N)]))
    return np.hstack(parts) / sigma_e


def _eve_factor(Psi, theta):
    p = Psi.conj().T @ theta
    Xi_inv = sm_inverse(p)
    T = Psi @ Xi_inv @ Psi.conj().T
    T = 0.5 * (T + T.conj().T)
    Tt = T @ theta
    u = float(np.real(np.vdot(theta, Tt)))
    Xp = Xi_inv @ p
    eps = float(np.real(np.vdot(Xp, Xp)))
    return Xi_inv, T, Tt, u, np.outer(Tt, Tt.conj()), eps


def radar_lift(theta, W, z, u, channels, params):
    """A, B, C, c0 with f = v^H A v, q = v^H B v + theta^H C theta + sigma^2 ||u||^2."""
    G, h = channels.G, channels.h_RT
    X = np.column_stack([W, z])
    Gu = G @ u
    a = h.conj() * Gu
    T = h[:, None] * G                         # diag(h) G
    Pi = X @ X.conj().T
    P = np.conj(T @ Pi @ T.conj().T)
    K_ = np.outer(a, a.conj())
    A = params.zeta2 * np.kron(K_, P)
    B = params.zeta2 * params.sigma_r2 * np.kron(K_, np.diag(np.abs(h) ** 2))
    C = params.sigma_r2 * np.diag(np.abs(Gu) ** 2)
    c0 = params.gamma_r * params.sigma2 * np.real(np.vdot(u, u))
    return A, B, C, float(c0)


def power_lift(W, z, channels, params):
    """(G_tilde, J_tilde) with ris_power = theta^H G_tilde theta + v^H J_tilde v."""
    G, h = channels.G, channels.h_RT
    X = np.column_stack([W, z])
    GX = G @ X
    N = G.shape[0]
    Gt = np.diag(np.sum(np.abs(GX) ** 2, axis=1) + 2 * params.sigma_r2)
    c = h[:, None] * GX                        # columns c_i = diag(h) G x_i
    S = c.conj() @ c.T                         # sum_i c_i^* c_i^T
    Dh = np.diag(np.abs(h) ** 2)
    J = params.zeta2 * (np.kron(Dh, S) + params.sigma_r2 * np.kron(Dh, Dh))
    return Gt, 0.5 * (J + J.conj().T)


def ris_expand(vars_t, norm, eve_moment, params):
    W, z, th, u = vars_t.W, vars_t.z, vars_t.theta, vars_t.u
    K = W.shape[1] - 1
    N = len(th)
    ch = norm.raw
    G = ch.G
    X = np.column_stack([W, z])

    a = np.einsum("knm,mi->kin", norm.Hbar, X)              # K x (K+2) x N
    proj = np.einsum("n,kin->ki", th.conj(), a)
    P = np.abs(proj) ** 2
    sR = user_noise(vars_t, norm, params)
    idx = np.arange(K)
    priv = P[:, 1:K + 1]
    alpha = proj[idx, idx + 1]
    beta = priv.sum(1) - priv[idx, idx] + P[:, K + 1] + sR
    alpha0 = proj[:, 0]
    beta0 = priv.sum(1) + P[:, K + 1] + sR

    A_bar = X[:, 1:] @ X[:, 1:].conj().T
    A_bar0 = X @ X.conj().T
    B_bar = params.sigma_r2 * np.abs(norm.hbar_R)[:, :, None] ** 2 * np.eye(N)[None]

    # Eve side: rank-one factorization of the moment-weighted quadratic
    Dt = eve_moment.D_tilde                     # row n = diag of D_tilde_n
    se, sr = np.sqrt(params.sigma_e2), np.sqrt(params.sigma_r2)
    GX = G @ X
    Psi_E, Xi_E, T_E, u_E, C, eps_5, Tt_E = [], [], [], [], [], [], []
    for k in range(K):
        Wk = GX[:, 1:K + 1].copy()
        Wk[:, k] = 0
        Psi = _psi(Dt, [GX[:, :1], Wk, GX[:, K + 1:]], sr, se)
        Xi_inv, T, Tt, uk, Ck, e5 = _eve_factor(Psi, th)
        Psi_E.append(Psi); Xi_E.append(Xi_inv); T_E.append(T); Tt_E.append(Tt)
        u_E.append(uk); C.append(Ck); eps_5.append(e5)
    u_E, eps_5 = np.array(u_E), np.array(eps_5)
    Psi_0 = _psi(Dt, [GX[:, 1:K + 1], GX[:, K + 1:]], sr, se)
    Xi_0, T_0, Tt_0, u_0, P_0E, eps_8 = _eve_factor(Psi_0, th)

    Psi_all = _psi(Dt, [GX], sr, se)
    Gamma_E = Psi_all @ Psi_all.conj().T
    Gamma_E = 0.5 * (Gamma_E + Gamma_E.conj().T)
    mu = float(np.real(np.vdot(th, Gamma_E @ th)))

    s = np.abs(alpha) ** 2 / beta
    eps_4 = np.log1p(s) - s - np.abs(alpha) ** 2 / (beta * (beta + np.abs(alpha) ** 2))
    eps_13 = (1 - np.log(1 - u_E) - np.log(1 + mu) - 1 / (1 + mu)
              - eps_5 / (1 - u_E) - u_E / (1 - u_E))
    eps_bar_5 = (1 + eps_4 - np.log(1 - u_E) - np.log(1 + mu) - 1 / (1 + mu)
                 - (u_E + eps_5) / (1 - u_E))
    s0 = np.abs(alpha0) ** 2 / beta0
    eps_6 = np.log1p(s0) - s0 - np.abs(alpha0) ** 2 / (beta0 * (beta0 + np.abs(alpha0) ** 2))
    eps_7 = eps_6 - np.log(1 - u_0) - np.log(1 + mu) - 1 / (1 + mu) - u_0 / (1 - u_0) + 1
    eps_14 = (1 - np.log(1 - u_0) - np.log(1 + mu) - 1 / (1 + mu) - (u_0 + eps_8) / (1 - u_0))

    d_E, D_E, ups, V = [], [], [], []
    for k in range(K):
        Hk = norm.Hbar[k]
        Mk = Hk @ A_bar @ Hk.conj().T + B_bar[k]
        ck = np.abs(alpha[k]) ** 2 / (beta[k] * (beta[k] + np.abs(alpha[k]) ** 2))
        akk = a[k, k + 1]
        d_E.append(akk * np.conj(alpha[k]) / beta[k] + Tt_E[k] / (1 - u_E[k]))
        Dk = ck * Mk + C[k] / (1 - u_E[k]) + Gamma_E / (1 + mu)
        D_E.append(0.5 * (Dk + Dk.conj().T))
        M0 = Hk @ A_bar0 @ Hk.conj().T + B_bar[k]
        c0k = np.abs(alpha0[k]) ** 2 / (beta0[k] * (beta0[k] + np.abs(alpha0[k]) ** 2))
        ups.append(a[k, 0] * np.conj(alpha0[k]) / beta0[k] + Tt_0 / (1 - u_0))
        Vk = Gamma_E / (1 + mu) + c0k * M0 + P_0E / (1 - u_0)
        V.append(0.5 * (Vk + Vk.conj().T))

    A, B, C_r, c0 = radar_lift(th, W, z, u, ch, params)
    D = params.gamma_r * B - A
    mm_r = mm_quartic_majorant(D, th, params.beta_max)
    Gt, J = power_lift(W, z, ch, params)
    mm_p = mm_quartic_majorant(J, th, params.beta_max)

    exp = RisExpansion(N, K, th.copy(), X, u.copy(), a, alpha, beta, alpha0, beta0,
                       A_bar, A_bar0, B_bar, Psi_E, Psi_0, Xi_E, Xi_0, T_E, T_0,
                       u_E, u_0, mu, C, P_0E, Gamma_E, A, B, C_r, D, c0, mm_r,
                       J, Gt, mm_p, eps_4, eps_5, eps_bar_5, eps_13, eps_6, eps_7,
                       eps_8, eps_14, d_E, D_E, ups, V)
    exp.gamma_r = params.gamma_r
    return exp


def ris_blocks(N):
    return (("theta", N),)


def ris_epsr_constraint(exp, k):
    """eps_bar_5 + 2Re{theta^H d} - theta^H D theta + r_k - tau >= 0."""
    return QuadraticConstraint(f"epsr_{k}", ">=", ris_blocks(exp.N), -exp.D_E[k], exp.d_E[k],
                               exp.eps_bar_5[k], {f"r{k}": 1.0, "tau": -1.0})


def ris_ecsr_constraint(exp):
    g = {f"r{j}": -1.0 for j in range(exp.K)}
    return [QuadraticConstraint(f"ecsr_{k}", ">=", ris_blocks(exp.N), -exp.V_0E[k],
                                exp.upsilon_0E[k],
                                exp.eps_7[k] - exp.eps_8 / (1 - exp.u_0E), dict(g))
            for k in range(exp.K)]


def ris_radar_constraint(exp, params=None):
    gamma_r = exp.gamma_r if params is None else params.gamma_r
    mm = exp.mm_radar
    Ct = gamma_r * exp.C_r + 0.5 * mm.lam_bar * np.eye(exp.N)
    return QuadraticConstraint("radar", "<=", ris_blocks(exp.N), Ct, 0.5 * mm.d_tilde,
                               exp.c0 + mm.c1)


def ris_budget_constraint(exp, params):
    mm = exp.mm_power
    Gbb = exp.G_tilde + 0.5 * mm.lam_bar * np.eye(exp.N)
    rhs = params.P_ris - mm.c1
    con = QuadraticConstraint("ris_power", "<=", ris_blocks(exp.N), Gbb, 0.5 * mm.d_tilde, -rhs)
    con.likely_infeasible = rhs < -abs(params.P_ris)
    return con
