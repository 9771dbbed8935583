"""Conic assembly and solution of the two convex subproblems, plus the radar receive filter.

Real layout: each complex block is stored as [Re; Im] in block order, followed by the
real scalars (r_0..r_{K-1}, tau). Every quadratic constraint is passed to the solver as
a second-order cone built from an eigen-factor of its convex-side matrix.
"""
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import linalg, sparse

from .surrogates.bf import (bf_blocks, bf_budget_constraints, bf_ecsr_constraint,
                            bf_epsr_constraint, bf_radar_constraint, rate_names)
from .surrogates.quadratic import QuadraticConstraint
from .surrogates.ris import (ris_blocks, ris_budget_constraint, ris_ecsr_constraint,
                             ris_epsr_constraint, ris_radar_constraint)

OPTIMAL, MAX_ITER, INFEASIBLE, NUMERICAL = "optimal", "max-iterations", "infeasible", "numerical-failure"


@dataclass
class ConvexProgram:
    blocks: tuple                  # ((name, size), ...) complex blocks
    reals: tuple                   # real scalar names, objective variable last
    constraints: list
    nonneg: tuple = ()             # reals constrained >= 0
    cap: dict = field(default_factory=dict)   # block -> elementwise modulus cap
    objective: str = "tau"
    obj_scale: float = 1.0

    @property
    def n(self):
        return 2 * sum(s for _, s in self.blocks) + len(self.reals)

    def offsets(self):
        out, o = {}, 0
        for name, s in self.blocks:
            out[name] = (o, s)
            o += 2 * s
        return out

    def real_offset(self, name):
        return 2 * sum(s for _, s in self.blocks) + self.reals.index(name)

    def to_real(self, x, y):
        """Complex blocks (dict) and reals (dict) -> real vector."""
        X = np.zeros(self.n)
        for name, (o, s) in self.offsets().items():
            X[o:o + s] = np.real(x[name])
            X[o + s:o + 2 * s] = np.imag(x[name])
        for name in self.reals:
            X[self.real_offset(name)] = y.get(name, 0.0)
        return X

    def from_real(self, X):
        x = {name: X[o:o + s] + 1j * X[o + s:o + 2 * s] for name, (o, s) in self.offsets().items()}
        y = {name: float(X[self.real_offset(name)]) for name in self.reals}
        return x, y


@dataclass
class Solution:
    x: dict
    y: dict
    objective: float
    status: str
    max_violation: float
    iterations: int
    solver_status: str = ""

    @property
    def tau(self):
        return self.y.get("tau", self.objective)


def _gather(con, x):
    return np.concatenate([np.asarray(x[n]) for n, _ in con.blocks]) if con.blocks else np.zeros(0)


def constraint_scale(con):
    """Positive normalizer so that each constraint row has O(1) coefficients."""
    vals = [abs(con.c), np.abs(con.b).max(initial=0.0)]
    if con.Q is not None:
        vals.append(np.abs(con.Q).max(initial=0.0))
    vals += [abs(a) for a in con.g.values()]
    s = max(vals)
    return s if s > 0 else 1.0


def violations(prog, x, y):
    """Per-constraint normalized violation, re-evaluated from the complex forms."""
    out = {}
    for con in prog.constraints:
        out[con.name] = con.violation(_gather(con, x), y) / constraint_scale(con)
    for name in prog.nonneg:
        out[f"{name}>=0"] = max(-y[name], 0.0)
    for blk, beta in prog.cap.items():
        out[f"|{blk}|<=cap"] = max(float(np.max(np.abs(x[blk]) - beta, initial=0.0)), 0.0)
    return out


def _real_form(prog, con):
    """(P, a, c, g) with f = X^T P X + a^T X + g.y + c, convex <= 0 side, normalized."""
    Q, b, c, g = con.convex_form()
    s = constraint_scale(con)
    n = prog.n
    off = prog.offsets()
    re_idx, im_idx = [], []
    for name, size in con.blocks:
        o, sz = off[name]
        assert sz == size, f"{con.name}: block {name} size mismatch"
        re_idx.append(np.arange(o, o + sz))
        im_idx.append(np.arange(o + sz, o + 2 * sz))
    re_idx = np.concatenate(re_idx) if re_idx else np.zeros(0, int)
    im_idx = np.concatenate(im_idx) if im_idx else np.zeros(0, int)
    a = np.zeros(n)
    a[re_idx] = 2 * np.real(b) / s
    a[im_idx] = 2 * np.imag(b) / s
    for name, coef in g.items():
        if name in prog.reals:
            a[prog.real_offset(name)] += coef / s
    P = None
    if Q is not None:
        Qr, Qi = np.real(Q) / s, np.imag(Q) / s
        idx = np.concatenate([re_idx, im_idx])
        Pl = np.block([[Qr, -Qi], [Qi, Qr]])
        P = (idx, 0.5 * (Pl + Pl.T))
    return P, a, c / s


def _factor(Pl, tol=1e-13):
    w, V = linalg.eigh(Pl)
    wmax = max(w.max(initial=0.0), 0.0)
    keep = w > tol * wmax
    return (np.sqrt(w[keep])[:, None] * V[:, keep].T) if wmax > 0 else np.zeros((0, len(w)))


def conic_data(prog):
    """(A, b, cones, q) in the solver's Ax + s = b, s in K convention."""
    n = prog.n
    rows, bvec, cones = [], [], []
    lin_rows, lin_b = [], []
    for con in prog.constraints:
        P, a, c = _real_form(prog, con)
        if P is None:
            lin_rows.append(a)
            lin_b.append(-c)
            continue
        idx, Pl = P
        F = _factor(Pl)
        if F.shape[0] == 0:
            lin_rows.append(a)
            lin_b.append(-c)
            continue
        Ff = np.zeros((F.shape[0], n))
        Ff[:, idx] = F
        # ||F x||^2 <= -a.x - c  <=>  ||(1 + a.x + c, 2 F x)|| <= 1 - a.x - c
        rows.append(np.vstack([a, a, -2 * Ff]))
        bvec.append(np.concatenate([[1 - c, -1 - c], np.zeros(F.shape[0])]))
        cones.append(clarabel.SecondOrderConeT(F.shape[0] + 2))
    for name in prog.nonneg:
        e = np.zeros(n)
        e[prog.real_offset(name)] = -1.0
        lin_rows.append(e)
        lin_b.append(0.0)
    off = prog.offsets()
    for blk, beta in prog.cap.items():
        o, s = off[blk]
        for j in range(s):
            R = np.zeros((3, n))
            R[1, o + j] = -1.0
            R[2, o + s + j] = -1.0
            rows.append(R)
            bvec.append(np.array([beta, 0.0, 0.0]))
            cones.append(clarabel.SecondOrderConeT(3))
    blocks_A, blocks_b, all_cones = [], [], []
    if lin_rows:
        blocks_A.append(np.vstack(lin_rows))
        blocks_b.append(np.array(lin_b))
        all_cones.append(clarabel.NonnegativeConeT(len(lin_rows)))
    blocks_A += rows
    blocks_b += bvec
    all_cones += cones
    A = np.vstack(blocks_A) if blocks_A else np.zeros((0, n))
    b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
    q = np.zeros(n)
    q[prog.real_offset(prog.objective)] = -prog.obj_scale
    return A, b, all_cones, q


def solve_program(prog, tol=1e-7, max_iter=200):
    A, b, cones, q = conic_data(prog)
    n = prog.n
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = max_iter
    settings.max_threads = 1
    P = sparse.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, q, sparse.csc_matrix(A), b, cones, settings)
    res = solver.solve()
    st = str(res.status).split(".")[-1]
    X = np.asarray(res.x, float)
    x, y = prog.from_real(X)
    viol = violations(prog, x, y)
    vmax = max(viol.values(), default=0.0)
    if st == "Solved":
        status = OPTIMAL if vmax <= max(tol, 1e-6) else NUMERICAL
    elif st == "AlmostSolved":
        status = OPTIMAL if vmax <= tol else NUMERICAL
    elif st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = INFEASIBLE
    elif st in ("MaxIterations", "MaxTime"):
        status = MAX_ITER
    else:
        status = NUMERICAL
    obj = y[prog.objective] if prog.objective in y else float("nan")
    return Solution(x, y, obj, status, vmax, int(res.iterations), st)


# ---------------------------------------------------------------------------
# assembly

def assemble_bf_program(exp, params, channels, rsma=True, active=True):
    M, K = exp.M, exp.K
    blocks = bf_blocks(M, K)
    cons = [bf_epsr_constraint(exp, k) for k in range(K)]
    if rsma:
        cons += bf_ecsr_constraint(exp)
    cons.append(bf_radar_constraint(exp, params, channels))
    bs, ris = bf_budget_constraints(exp, channels, params) if active else \
        (bf_budget_constraints_bs(exp, params), None)
    cons.append(bs)
    if ris is not None:
        cons.append(ris)
    reals = tuple(rate_names(K)) + ("tau",)
    if not rsma:
        keep = [n for n, _ in blocks if n != "w0"]
        cons = [c.restrict(keep).drop_reals(rate_names(K)) for c in cons]
        blocks = tuple((n, s) for n, s in blocks if n != "w0")
        reals = ("tau",)
    nonneg = tuple(rate_names(K)) if rsma else ()
    return ConvexProgram(blocks, reals, cons, nonneg)


def bf_budget_constraints_bs(exp, params):
    blocks = bf_blocks(exp.M, exp.K)
    n = sum(s for _, s in blocks)
    return QuadraticConstraint("bs_power", "<=", blocks, np.eye(n, dtype=complex), None,
                               -params.P_bs)


def assemble_ris_program(exp, params, rsma=True, active=True):
    K = exp.K
    cons = [ris_epsr_constraint(exp, k) for k in range(K)]
    if rsma:
        cons += ris_ecsr_constraint(exp)
    cons.append(ris_radar_constraint(exp, params))
    if active:
        cons.append(ris_budget_constraint(exp, params))
    reals = tuple(rate_names(K)) + ("tau",)
    if not rsma:
        cons = [c.drop_reals(rate_names(K)) for c in cons]
        reals = ("tau",)
    nonneg = tuple(rate_names(K)) if rsma else ()
    return ConvexProgram(ris_blocks(exp.N), reals, cons, nonneg, {"theta": params.beta_max})


def check_program(prog, tol=1e-8):
    for c in prog.constraints:
        c.check_convex(tol)


def dump_program(prog, path):
    """Sparse triplet text: header, then 'A i j v', 'b i v', 'q i v' and one 'cone kind dim' per cone."""
    A, b, cones, q = conic_data(prog)
    with open(path, "w") as fh:
        fh.write("# secopt conic program: minimize q.x s.t. b - A x in K\n")
        fh.write(f"dims {A.shape[0]} {A.shape[1]}\n")
        fh.write("layout " + " ".join(f"{n}:{s}c" for n, s in prog.blocks)
                 + " " + " ".join(prog.reals) + "\n")
        for c in cones:
            kind = type(c).__name__.replace("ConeT", "")
            fh.write(f"cone {kind} {c.dim}\n")
        for i, j in zip(*np.nonzero(A)):
            fh.write(f"A {i} {j} {A[i, j]:.17g}\n")
        for i in np.nonzero(b)[0]:
            fh.write(f"b {i} {b[i]:.17g}\n")
        for i in np.nonzero(q)[0]:
            fh.write(f"q {i} {q[i]:.17g}\n")


# ---------------------------------------------------------------------------
# radar receive filter

def radar_filter_matrices(vars, channels, params):
    from .metrics import radar_matrices
    HT, H0, H1 = radar_matrices(vars, channels, params)
    X = np.column_stack([vars.W, vars.z])
    HTX = HT @ X
    At = params.zeta2 * HTX @ HTX.conj().T
    B0 = (params.zeta2 * params.sigma_r2 * H0 @ H0.conj().T
          + params.sigma_r2 * H1 @ H1.conj().T + params.sigma2 * np.eye(len(vars.u)))
    return 0.5 * (At + At.conj().T), 0.5 * (B0 + B0.conj().T)


def rayleigh_top(A, B):
    """Top generalized eigenpair of (A, B), B Hermitian PD, via a Cholesky whitening."""
    s = np.real(np.trace(B)) / len(B)
    L = linalg.cholesky(B / s, lower=True)
    Li_A = linalg.solve_triangular(L, A / s, lower=True)
    C = linalg.solve_triangular(L, Li_A.conj().T, lower=True)
    C = 0.5 * (C + C.conj().T)
    w, V = linalg.eigh(C)
    u = linalg.solve_triangular(L.conj().T, V[:, -1], lower=False)
    return u / np.linalg.norm(u), float(w[-1])


def radar_receiver(vars, channels, params):
    """Unit-norm receive filter maximizing the radar SNR and the attained SNR."""
    A, B = radar_filter_matrices(vars, channels, params)
    return rayleigh_top(A, B)
