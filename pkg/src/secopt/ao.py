"""Alternating optimization over (W, z, r), (theta, r) and u, with benchmark scheme adapters."""
import enum
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .channels import crandn, normalize
from .config import to_linear
from .convex import (OPTIMAL, ConvexProgram, assemble_bf_program, assemble_ris_program,
                     bf_budget_constraints_bs, constraint_scale, radar_receiver,
                     solve_program)
from .metrics import (DesignVariables, bs_power, ergodic_eve_rates_approx, radar_snr, ris_power,
                      user_rates)
from .surrogates.bf import (InfeasibleBudgetError, bf_budget_constraints, bf_ecsr_constraint, bf_expand,
                            bf_radar_constraint)
from .surrogates.quadratic import QuadraticConstraint
from .surrogates.ris import (ris_blocks, ris_budget_constraint, ris_ecsr_constraint, ris_expand,
                             ris_radar_constraint)


class Scheme(enum.Enum):
    ARIS_RSMA = "ARIS-RSMA"
    ARIS_SDMA = "ARIS-SDMA"
    PRIS_RSMA = "PRIS-RSMA"
    PRIS_SDMA = "PRIS-SDMA"

    @property
    def rsma(self):
        return self.name.endswith("RSMA")

    @property
    def active_ris(self):
        return self.name.startswith("ARIS")

    @classmethod
    def parse(cls, s):
        if isinstance(s, cls):
            return s
        key = str(s).upper().replace("-", "_")
        return cls[key]


def scheme_params(scheme, params):
    """Physical parameters seen by a scheme: passive surfaces have unit gain and no dynamic noise."""
    if scheme.active_ris:
        return params
    return params.replace(beta_max=1.0, sigma_r2=0.0)


def apply_scheme(scheme, assemble, *args, common=True, **kw):
    """Run a program-assembly hook with the structural restrictions of `scheme`.

    common=False assembles an RSMA step with w0 = 0 and r = 0, where the common-secrecy rows
    hold exactly (both common rates vanish) and their surrogates would pin every other variable.
    """
    return assemble(*args, rsma=scheme.rsma and common, active=scheme.active_ris, **kw)


def _has_common(v):
    return bool(np.any(v.W[:, 0] != 0))


@dataclass
class AoOptions:
    max_iters: int = 60
    tol: float = 1e-3
    solver_tol: float = 1e-7
    guard_ris: bool = True       # accept a RIS step only if it does not lower tau
    restore_iters: int = 150     # radar feasibility-restoration sweeps (stops early on stall)
    restore_margin: float = 0.02  # relative radar-SNR margin targeted by the restoration
    common_branch: bool = False  # RSMA: also try the w0 = 0 branch of each BF step
    reseed: float = 1e-3         # RSMA: power fraction of a common seed when w0 = 0 (0 disables)
    multistart: int = 1


@dataclass
class IterRecord:
    it: int
    tau: float
    tau_bf: float
    tau_ris: float
    bf_status: str
    ris_status: str
    radar_snr: float
    bs_power: float
    ris_power: float
    objective: float      # deterministic min_k (r_k + R_k - E_k), nats
    seconds: float


@dataclass
class AoTrace:
    records: list
    vars: DesignVariables
    converged: bool
    iterations: int
    scheme: str
    reason: str = ""
    init_objective: float = float("nan")     # at the raw initializer
    start_objective: float = float("nan")    # at the feasible point the loop starts from
    restore_sweeps: int = 0

    @property
    def taus(self):
        return np.array([r.tau for r in self.records])

    def to_json(self):
        return {"scheme": self.scheme, "converged": self.converged, "iterations": self.iterations,
                "reason": self.reason, "init_objective": self.init_objective,
                "start_objective": self.start_objective,
                "restore_sweeps": self.restore_sweeps,
                "records": [asdict(r) for r in self.records], "vars": self.vars.to_json()}

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def objective_value(vars, norm, eve_moment, params):
    """(min_k r_k + R_k - E_k, common margin min_k R_s0,k - E_0 - sum r) in nats."""
    Rs0, Rk = user_rates(vars, norm, params)
    c, pr = ergodic_eve_rates_approx(vars, norm, eve_moment, params)
    return float(np.min(vars.r + Rk - pr)), float(np.min(Rs0) - c - np.sum(vars.r))


def _scale_theta_to_budget(v, channels, params, target):
    if ris_power(v, channels, params) <= target:
        return v
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ris_power(v.copy(theta=mid * v.theta), channels, params) <= target:
            lo = mid
        else:
            hi = mid
    return v.copy(theta=lo * v.theta)


def initialize(config, channels, scheme, rng, params=None):
    scheme = Scheme.parse(scheme)
    params = scheme_params(scheme, to_linear(config) if params is None else params)
    norm = normalize(channels, params)
    K, M = channels.K, channels.M
    # phases that align the cascade towards user 1
    U = np.linalg.svd(norm.Hbar[0])[0]
    amp = params.beta_max / np.sqrt(2) if scheme.active_ris else 1.0
    theta = amp * np.exp(1j * np.angle(U[:, 0]))
    heff = np.einsum("n,knm->km", theta.conj(), norm.Hbar).conj()      # K x M, (theta^H Hbar_k)^H
    unit = lambda x: x / max(np.linalg.norm(x), 1e-300)
    P = 0.9 * params.P_bs
    f_priv, f_com, f_an = (0.7, 0.2, 0.1) if scheme.rsma else (0.9, 0.0, 0.1)
    W = np.zeros((M, K + 1), complex)
    for k in range(K):
        W[:, k + 1] = np.sqrt(f_priv * P / K) * unit(heff[k])
    if scheme.rsma:
        W[:, 0] = np.sqrt(f_com * P) * unit(heff.sum(0))
    z = np.sqrt(f_an * P) * unit(crandn(rng, M))
    v = DesignVariables(W, z, theta, np.ones(M, complex) / np.sqrt(M), np.zeros(K))
    if scheme.active_ris:
        v = _scale_theta_to_budget(v, channels, params, 0.9 * params.P_ris)
    u, _ = radar_receiver(v, channels, params)
    return v.copy(u=u)


def _solve_bf(exp, params, channels, scheme, opts, common):
    prog = apply_scheme(scheme, assemble_bf_program, exp, params, channels, common=common)
    return solve_program(prog, opts.solver_tol)


def _bf_step(v, norm, em, params, channels, scheme, opts):
    try:
        exp = bf_expand(v, norm, em, params)
        common = _has_common(v)
        sol = _solve_bf(exp, params, channels, scheme, opts, common)
        if scheme.rsma and common and opts.common_branch:
            # the surrogates are global minorants, so the w0 = 0 branch is a valid inner step too
            alt = _solve_bf(exp, params, channels, scheme, opts, False)
            if alt.status == OPTIMAL and (sol.status != OPTIMAL or alt.tau > sol.tau):
                sol = alt
    except InfeasibleBudgetError:
        return None, "infeasible"
    if sol.status != OPTIMAL:
        return None, sol.status
    K = v.K
    W = np.zeros_like(v.W)
    for i in range(K + 1):
        if f"w{i}" in sol.x:
            W[:, i] = sol.x[f"w{i}"]
    r = np.array([max(sol.y.get(f"r{k}", 0.0), 0.0) for k in range(K)])
    return (v.copy(W=W, z=sol.x["z"], r=r), sol.tau), OPTIMAL


def _reseed_common(v, norm, em, params, channels, frac):
    """Give an empty common stream a small share of the private power if its secrecy margin is positive."""
    heff = np.einsum("n,knm->km", v.theta.conj(), norm.Hbar).conj()
    w0 = heff.sum(0)
    P = np.sum(np.abs(v.W) ** 2)
    w0 = np.sqrt(frac * P) * w0 / max(np.linalg.norm(w0), 1e-300)
    W = np.column_stack([w0, np.sqrt(1 - frac) * v.W[:, 1:]])
    cand = v.copy(W=W, r=0 * v.r)
    if objective_value(cand, norm, em, params)[1] <= 0:
        return v
    if radar_snr(cand, channels, params) < params.gamma_r or \
            ris_power(cand, channels, params) > params.P_ris:
        return v
    return cand


def _ris_step(v, norm, em, params, scheme, opts):
    exp = ris_expand(v, norm, em, params)
    prog = apply_scheme(scheme, assemble_ris_program, exp, params, common=_has_common(v))
    sol = solve_program(prog, opts.solver_tol)
    if sol.status != OPTIMAL:
        return None, sol.status
    r = np.array([max(sol.y.get(f"r{k}", 0.0), 0.0) for k in range(v.K)])
    th = sol.x["theta"]
    # clip round-off above the amplitude cap
    mag = np.abs(th)
    th = np.where(mag > params.beta_max, th * params.beta_max / np.maximum(mag, 1e-300), th)
    return (v.copy(theta=th, r=r), sol.tau), OPTIMAL


def _margin_form(con, sign):
    """Attach tau with a unit-scaled coefficient so that maximizing tau maximizes the margin."""
    g = dict(con.g)
    g["tau"] = sign * constraint_scale(con)
    return QuadraticConstraint(con.name, con.sense, con.blocks, con.Q, con.b, con.c, g)


def _shrink_common(v, norm, em, params):
    """Largest scaling of w0 in [0, 1] with a nonnegative common secrecy margin."""
    margin = lambda t: objective_value(v.copy(W=np.column_stack([t * v.W[:, 0], v.W[:, 1:]])),
                                       norm, em, params)[1]
    if margin(1.0) >= 0:
        return v
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if margin(mid) >= 0 else (lo, mid)
    if lo < 1e-3:
        lo = 0.0
    return v.copy(W=np.column_stack([lo * v.W[:, 0], v.W[:, 1:]]))


def restore_radar(v, channels, norm, em, params, scheme, opts):
    """Push the radar SNR above gamma_r by Dinkelbach-style ascent on the SCA/MM radar margin.

    Each step targets the current SNR, so a positive margin is a strict SNR increase. The power budgets and (for RSMA, with r = 0) the common-secrecy rows stay in force so the
    returned point is a feasible start for the main loop. Returns (vars, feasible, sweeps).
    """
    names = [f"r{k}" for k in range(v.K)]
    v = v.copy(r=0 * v.r)
    hist = [radar_snr(v, channels, params)]
    for sweep in range(1, opts.restore_iters + 1):
        target = params.replace(gamma_r=radar_snr(v, channels, params))
        exp = bf_expand(v, norm, em, target)
        cons = [_margin_form(bf_radar_constraint(exp, target, channels), -1.0)]
        if scheme.active_ris:
            try:
                cons += list(bf_budget_constraints(exp, channels, target))
            except InfeasibleBudgetError:
                return v, False, sweep
        else:
            cons.append(bf_budget_constraints_bs(exp, params))
        blocks = tuple((n, s) for n, s in cons[0].blocks if n != "w0")
        if scheme.rsma and _has_common(v):
            # the common precoder keeps its initial value so restoration does not drain private power
            cons += [c.drop_reals(names) for c in bf_ecsr_constraint(exp)]
            cons = [c.fix("w0", v.W[:, 0]) for c in cons]
        else:
            cons = [c.restrict([n for n, _ in blocks]) for c in cons]
        sol = solve_program(ConvexProgram(blocks, ("tau",), cons), opts.solver_tol)
        if sol.status == OPTIMAL:
            W = v.W.copy()
            for i in range(1, v.K + 1):
                W[:, i] = sol.x[f"w{i}"]
            v = v.copy(W=W, z=sol.x["z"])
            v = v.copy(u=radar_receiver(v, channels, params)[0])
        target = params.replace(gamma_r=radar_snr(v, channels, params))
        rexp = ris_expand(v, norm, em, target)
        cons = [_margin_form(ris_radar_constraint(rexp, target), 1.0)]
        if scheme.active_ris:
            cons.append(ris_budget_constraint(rexp, target))
        if scheme.rsma and _has_common(v):
            cons += [c.drop_reals(names) for c in ris_ecsr_constraint(rexp)]
        prog = ConvexProgram(ris_blocks(rexp.N), ("tau",), cons, (), {"theta": params.beta_max})
        sol2 = solve_program(prog, opts.solver_tol)
        if sol2.status == OPTIMAL:
            th = sol2.x["theta"]
            mag = np.abs(th)
            th = np.where(mag > params.beta_max, th * params.beta_max / np.maximum(mag, 1e-300), th)
            v = v.copy(theta=th)
        v = v.copy(u=radar_receiver(v, channels, params)[0])
        hist.append(radar_snr(v, channels, params))
        if hist[-1] >= params.gamma_r * (1 + 0.5 * opts.restore_margin):
            return v, True, sweep
        if sol.status != OPTIMAL and sol2.status != OPTIMAL:
            break
        # less than 0.1% gain over five sweeps: the requirement is out of reach from here
        if sweep >= 10 and hist[-1] <= hist[-6] * (1 + 1e-3):
            break
    return v, False, sweep


def run_ao(config, channels, eve_moment, scheme, opts=None, params=None, rng=None, init=None):
    scheme = Scheme.parse(scheme)
    opts = AoOptions() if opts is None else opts
    base = to_linear(config) if params is None else params
    params = scheme_params(scheme, base)
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng
    norm = normalize(channels, params)
    v = initialize(config, channels, scheme, rng, base) if init is None else init
    init_obj = objective_value(v, norm, eve_moment, params)[0]
    records = []
    restore = 0
    if scheme.rsma:
        v = _shrink_common(v, norm, eve_moment, params)
    if radar_snr(v, channels, params) < params.gamma_r:
        v, ok, restore = restore_radar(v, channels, norm, eve_moment, params, scheme, opts)
        if not ok:
            return AoTrace(records, v, False, 0, scheme.value, "radar infeasible", init_obj,
                           restore_sweeps=restore)
    start_obj = objective_value(v, norm, eve_moment, params)[0]
    tau_prev = None
    converged, reason = False, "max-iters"
    for it in range(1, opts.max_iters + 1):
        t0 = time.perf_counter()
        res, bf_status = _bf_step(v, norm, eve_moment, params, channels, scheme, opts)
        tau_bf = tau_ris = float("nan")
        tau = tau_prev
        if res is not None:
            v, tau_bf = res
            tau = tau_bf
        res, ris_status = _ris_step(v, norm, eve_moment, params, scheme, opts)
        if res is not None:
            v_new, tau_ris = res
            if (not opts.guard_ris) or tau is None or tau_ris >= tau - 1e-7:
                v, tau = v_new, tau_ris
            else:
                ris_status = "rejected"
        g_before = radar_snr(v, channels, params)
        u, g_after = radar_receiver(v, channels, params)
        assert g_after >= g_before * (1 - 1e-9), "receive filter lowered the radar SNR"
        v = v.copy(u=u)
        if scheme.rsma and opts.reseed > 0 and not _has_common(v):
            v = _reseed_common(v, norm, eve_moment, params, channels, opts.reseed)
        obj = objective_value(v, norm, eve_moment, params)[0]
        records.append(IterRecord(it, float("nan") if tau is None else float(tau), tau_bf, tau_ris,
                                  bf_status, ris_status, radar_snr(v, channels, params),
                                  bs_power(v), ris_power(v, channels, params), obj,
                                  time.perf_counter() - t0))
        if bf_status != OPTIMAL and ris_status not in (OPTIMAL, "rejected"):
            reason = f"both subproblems failed ({bf_status}/{ris_status})"
            break
        if tau_prev is not None and tau is not None and abs(tau - tau_prev) <= opts.tol:
            converged, reason = True, "tau-stall"
            break
        tau_prev = tau
    return AoTrace(records, v, converged, len(records), scheme.value, reason, init_obj, start_obj,
                   restore)
