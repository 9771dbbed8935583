"""Beamforming-side surrogates: expansion cache and convex constraints in (W, z, r, tau)."""
from dataclasses import dataclass

import numpy as np

from ..metrics import radar_matrices, user_noise
from .quadratic import QuadraticConstraint


class InfeasibleBudgetError(ValueError):
    pass


def bf_blocks(M, K):
    return tuple([(f"w{i}", M) for i in range(K + 1)] + [("z", M)])


def rate_names(K):
    return [f"r{k}" for k in range(K)]


@dataclass
class BfExpansion:
    M: int
    K: int
    X_t: np.ndarray          # M x (K+2), columns [w0..wK, z] at the expansion point
    theta_t: np.ndarray
    u: np.ndarray
    heff: np.ndarray         # K x M, row k maps w to theta_t^H Hbar_k w
    alpha: np.ndarray
    beta: np.ndarray
    alpha0: np.ndarray
    beta0: np.ndarray
    sbar_R: np.ndarray
    sbar_E: float
    Omega_blk: np.ndarray    # sigma_E^-1 J_frown^H Phi^H G (N x M); full operator is I (x) this
    G_hat_E: np.ndarray
    ell_E: float
    # private stacks, one per k
    omega_idx: list
    omega_t: list
    Q: list
    Q_inv: list
    q: np.ndarray
    y: list                  # sigma_E^-1 Omega^H Q^-1 Omega omega_t; Qbar = y y^H
    eps_E: np.ndarray
    # common stack
    omega0_idx: list
    omega0_t: np.ndarray
    Q0: np.ndarray
    Q0_inv: np.ndarray
    q0: float
    y0: np.ndarray
    eps_0E: float
    # constants
    eps_0: np.ndarray
    eps_1: np.ndarray
    eps_11: np.ndarray
    eps_bar_11: np.ndarray
    eps_bar_E: np.ndarray
    eps_2: np.ndarray
    eps_bar_12: float
    eps_bar_0E: np.ndarray
    flags: tuple = ()

    def Omega_hat(self, nblk):
        return np.kron(np.eye(nblk), self.Omega_blk)

    def Qbar(self, k):
        return np.outer(self.y[k], self.y[k].conj())

    @property
    def Qbar0(self):
        return np.outer(self.y0, self.y0.conj())


def _inv(Q, flags, name):
    if np.linalg.cond(Q) > 1e12:
        flags.append(f"{name}: ridge")
        Q = Q + 1e-10 * np.eye(len(Q))
    return np.linalg.inv(Q)


def _matfrac_stack(Omega_blk, stack_t, sbar, flags, name):
    nb = stack_t.shape[1]
    x = (Omega_blk @ stack_t).T.reshape(-1)          # Omega_hat omega_t
    Q = np.eye(len(x)) + np.outer(x, x.conj()) / sbar
    Qi = _inv(Q, flags, name)
    Qix = Qi @ x
    q = float(np.real(np.vdot(x, Qix)) / sbar)
    eps = float(np.real(np.vdot(Qix, Qix)) / sbar)
    # y = sigma^-1 Omega_hat^H Q^-1 x, per block
    y = (Omega_blk.conj().T @ Qix.reshape(nb, -1).T).T.reshape(-1) / sbar
    return x, Q, Qi, q, eps, y


def bf_expand(vars_t, norm, eve_moment, params):
    W, z, th = vars_t.W, vars_t.z, vars_t.theta
    M, K = W.shape[0], W.shape[1] - 1
    X = np.column_stack([W, z])
    G = norm.raw.G
    flags = []

    heff = np.einsum("n,knm->km", th.conj(), norm.Hbar)
    P = np.abs(heff @ X) ** 2                         # K x (K+2)
    sR = user_noise(vars_t, norm, params)
    idx = np.arange(K)
    priv = P[:, 1:K + 1]
    alpha = np.einsum("km,mk->k", heff, W[:, 1:])
    beta = priv.sum(1) - priv[idx, idx] + P[:, K + 1] + sR
    alpha0 = heff @ W[:, 0]
    beta0 = priv.sum(1) + P[:, K + 1] + sR

    sE = float(eve_moment.sigma_bar(th))
    Ob = eve_moment.J_frown.conj().T @ (th.conj()[:, None] * G) / np.sqrt(params.sigma_e2)
    GE = eve_moment.G_hat(G, th)
    ell = float(np.real(np.einsum("mi,mn,ni->", X.conj(), GE, X)) + sE - 1)

    om_idx, om_t, Qs, Qis, qs, ys, epsE = [], [], [], [], [], [], []
    for k in range(K):
        ids = [0] + [i for i in range(1, K + 1) if i != k + 1] + [K + 1]
        st = X[:, ids]
        x, Q, Qi, q, eps, y = _matfrac_stack(Ob, st, sE, flags, f"Q_E,{k}")
        om_idx.append(ids)
        om_t.append(st.T.reshape(-1))
        Qs.append(Q); Qis.append(Qi); qs.append(q); ys.append(y); epsE.append(eps)
    qs, epsE = np.array(qs), np.array(epsE)
    ids0 = list(range(1, K + 2))
    st0 = X[:, ids0]
    x0, Q0, Q0i, q0, eps0E, y0 = _matfrac_stack(Ob, st0, sE, flags, "Q_0E")

    s = np.abs(alpha) ** 2 / beta
    eps_0 = np.log1p(s) - s - np.abs(alpha) ** 2 * sR / (beta * (beta + np.abs(alpha) ** 2))
    eps_1 = 1 - np.log((1 - qs) / sE) - np.log(1 + ell)
    eps_11 = eps_1 - qs / (1 - qs)
    eps_bar_11 = eps_11 - epsE / (1 - qs) - sE / (1 + ell)
    eps_bar_E = eps_0 + eps_1 - sE / (1 + ell) - epsE / (1 - qs) - qs / (1 - qs)

    s0 = np.abs(alpha0) ** 2 / beta0
    eps_2 = np.log1p(s0) - s0 - np.abs(alpha0) ** 2 * sR / (beta0 * (beta0 + np.abs(alpha0) ** 2))
    eps_bar_12 = (1 - q0 / (1 - q0) - eps0E / (1 - q0) - sE / (1 + ell)
                  - np.log((1 - q0) / sE) - np.log(1 + ell))
    eps_bar_0E = (1 + eps_2 - np.log((1 - q0) / sE) - np.log(1 + ell) - sE / (1 + ell)
                  - q0 / (1 - q0) - eps0E / (1 - q0))

    return BfExpansion(M, K, X, th.copy(), vars_t.u.copy(), heff, alpha, beta, alpha0, beta0,
                       sR, sE, Ob, GE, ell, om_idx, om_t, Qs, Qis, qs, ys, epsE,
                       ids0, st0.T.reshape(-1), Q0, Q0i, q0, y0, eps0E,
                       eps_0, eps_1, eps_11, eps_bar_11, eps_bar_E, eps_2, eps_bar_12,
                       eps_bar_0E, tuple(flags))


def _embed_vec(n_blk, M, ids, v):
    out = np.zeros(n_blk * M, complex)
    for j, i in enumerate(ids):
        out[i * M:(i + 1) * M] = v[j * M:(j + 1) * M]
    return out


def _embed_mat(n_blk, M, ids, A):
    out = np.zeros((n_blk * M, n_blk * M), complex)
    for a, i in enumerate(ids):
        for b, j in enumerate(ids):
            out[i * M:(i + 1) * M, j * M:(j + 1) * M] = A[a * M:(a + 1) * M, b * M:(b + 1) * M]
    return out


def _eve_total_term(exp):
    nb = exp.K + 2
    return np.kron(np.eye(nb), exp.G_hat_E) / (1 + exp.ell_E)


def bf_epsr_constraint(exp, k):
    """F^p(omega_E,k) + r_k - tau >= 0."""
    M, K = exp.M, exp.K
    nb = K + 2
    hv = exp.heff[k].conj()
    ck = np.abs(exp.alpha[k]) ** 2 / (exp.beta[k] * (exp.beta[k] + np.abs(exp.alpha[k]) ** 2))
    one_q = 1 - exp.q[k]
    y = exp.y[k]
    Q = -_embed_mat(nb, M, exp.omega_idx[k], np.outer(y, y.conj())) / one_q
    Q -= _eve_total_term(exp)
    hh = np.outer(hv, hv.conj())
    for i in range(1, nb):
        Q[i * M:(i + 1) * M, i * M:(i + 1) * M] -= ck * hh
    b = _embed_vec(nb, M, exp.omega_idx[k], y) / one_q
    b[(k + 1) * M:(k + 2) * M] += exp.alpha[k] * hv / exp.beta[k]
    return QuadraticConstraint(f"epsr_{k}", ">=", bf_blocks(M, K), Q, b,
                               exp.eps_bar_E[k], {f"r{k}": 1.0, "tau": -1.0})


def bf_ecsr_constraint(exp):
    """One constraint per k: F^c(omega_0E,k) - sum r >= 0."""
    M, K = exp.M, exp.K
    nb = K + 2
    one_q = 1 - exp.q0
    base_Q = -_embed_mat(nb, M, exp.omega0_idx, exp.Qbar0) / one_q - _eve_total_term(exp)
    base_b = _embed_vec(nb, M, exp.omega0_idx, exp.y0) / one_q
    g = {f"r{j}": -1.0 for j in range(K)}
    out = []
    for k in range(K):
        hv = exp.heff[k].conj()
        a, bt = exp.alpha0[k], exp.beta0[k]
        c0 = np.abs(a) ** 2 / (bt * (bt + np.abs(a) ** 2))
        Q = base_Q - c0 * np.kron(np.eye(nb), np.outer(hv, hv.conj()))
        b = base_b.copy()
        b[:M] += a * hv / bt
        out.append(QuadraticConstraint(f"ecsr_{k}", ">=", bf_blocks(M, K), Q, b,
                                       exp.eps_bar_0E[k], dict(g)))
    return out


def radar_noise(vars_like_u, theta, channels, params):
    """sigma_bar_R: denominator of the radar SNR for receive filter u."""
    from ..metrics import DesignVariables
    M = channels.M
    v = DesignVariables(np.zeros((M, 1)), np.zeros(M), theta, vars_like_u, np.zeros(0))
    HT, H0, H1 = radar_matrices(v, channels, params)
    u = vars_like_u
    return (params.zeta2 * params.sigma_r2 * np.sum(np.abs(u.conj() @ H0) ** 2)
            + params.sigma_r2 * np.sum(np.abs(u.conj() @ H1) ** 2)
            + params.sigma2 * np.real(np.vdot(u, u))), HT


def bf_radar_constraint(exp, params, channels, u=None):
    u = exp.u if u is None else u
    M, K = exp.M, exp.K
    sbar, HT = radar_noise(u, exp.theta_t, channels, params)
    hT = u.conj() @ HT
    HbT = np.outer(hT.conj(), hT)
    Xt = exp.X_t
    quad_t = float(np.sum(np.abs(hT @ Xt) ** 2))
    gbar = (params.gamma_r * sbar / params.zeta2 if params.zeta2 > 0 else np.inf) + quad_t
    b = (HbT @ Xt).T.reshape(-1)
    return QuadraticConstraint("radar", ">=", bf_blocks(M, K), None, b, -gbar)


def ris_tx_matrix(theta, channels, params):
    """H_w with ||Phi G x||^2 + zeta^2 ||Phi H_RT Phi G x||^2 = x^H H_w x."""
    G, h = channels.G, channels.h_RT
    PhiG = theta[:, None] * G
    GRT = np.outer(theta * h, (theta * h) @ G)       # Phi H_RT Phi G
    Hw = PhiG.conj().T @ PhiG + params.zeta2 * GRT.conj().T @ GRT
    return 0.5 * (Hw + Hw.conj().T)


def ris_static_power(theta, channels, params):
    th_h = theta * channels.h_RT
    return (params.zeta2 * params.sigma_r2 * np.sum(np.abs(th_h) ** 2) ** 2
            + 2 * params.sigma_r2 * np.sum(np.abs(theta) ** 2))


def bf_budget_constraints(exp, channels, params):
    M, K = exp.M, exp.K
    nb = K + 2
    blocks = bf_blocks(M, K)
    bs = QuadraticConstraint("bs_power", "<=", blocks, np.eye(nb * M, dtype=complex),
                             None, -params.P_bs)
    Pbar = params.P_ris - ris_static_power(exp.theta_t, channels, params)
    if Pbar <= 0:
        raise InfeasibleBudgetError(f"RIS static power exceeds budget (P_bar={Pbar:.3e})")
    Hw = ris_tx_matrix(exp.theta_t, channels, params)
    ris = QuadraticConstraint("ris_power", "<=", blocks, np.kron(np.eye(nb), Hw), None, -Pbar)
    return bs, ris
