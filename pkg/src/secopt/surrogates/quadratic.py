"""Container for one real-valued constraint in complex variables.

f(x, y) = x^H Q x + 2 Re{b^H x} + g^T y + c, with f <= 0 or f >= 0.
x is the concatenation of named complex blocks, y a dict of named reals.
"""
from dataclasses import dataclass, field

import numpy as np


class NonConvexError(ValueError):
    pass


@dataclass
class QuadraticConstraint:
    name: str
    sense: str                 # "<=" or ">="
    blocks: tuple              # ((block name, size), ...)
    Q: np.ndarray = None       # Hermitian n x n or None (affine)
    b: np.ndarray = None
    c: float = 0.0
    g: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.size
        if self.Q is not None:
            self.Q = 0.5 * (self.Q + self.Q.conj().T)
        if self.b is None:
            self.b = np.zeros(n, complex)
        self.c = float(np.real(self.c))

    @property
    def size(self):
        return int(sum(s for _, s in self.blocks))

    def offsets(self):
        out, o = {}, 0
        for name, s in self.blocks:
            out[name] = (o, o + s)
            o += s
        return out

    def value(self, x, y=None):
        y = y or {}
        v = 2 * np.real(np.vdot(self.b, x)) + self.c
        if self.Q is not None:
            v += np.real(np.vdot(x, self.Q @ x))
        for k, a in self.g.items():
            v += a * y.get(k, 0.0)
        return float(v)

    def violation(self, x, y=None):
        f = self.value(x, y)
        return max(f, 0.0) if self.sense == "<=" else max(-f, 0.0)

    def convex_form(self):
        """(P, b, c, g) of the equivalent convex <= 0 constraint."""
        if self.sense == "<=":
            return self.Q, self.b, self.c, dict(self.g)
        Q = None if self.Q is None else -self.Q
        return Q, -self.b, -self.c, {k: -a for k, a in self.g.items()}

    def check_convex(self, tol=1e-8):
        P = self.convex_form()[0]
        if P is None:
            return
        w = np.linalg.eigvalsh(P)
        scale = max(np.abs(w).max(), 1e-300)
        if w.min() < -tol * scale:
            raise NonConvexError(f"{self.name}: eigenvalue {w.min():.3e} on convex side")

    def restrict(self, keep):
        """Drop blocks not in `keep` (the dropped variables are fixed at zero)."""
        off = self.offsets()
        idx = np.concatenate([np.arange(*off[n]) for n, _ in self.blocks if n in keep]
                             or [np.zeros(0, int)])
        blocks = tuple((n, s) for n, s in self.blocks if n in keep)
        Q = None if self.Q is None else self.Q[np.ix_(idx, idx)]
        return QuadraticConstraint(self.name, self.sense, blocks, Q, self.b[idx], self.c,
                                   dict(self.g))

    def drop_reals(self, names):
        g = {k: a for k, a in self.g.items() if k not in names}
        return QuadraticConstraint(self.name, self.sense, self.blocks, self.Q, self.b,
                                   self.c, g)

    def fix(self, name, value):
        """Substitute a constant for block `name` and drop it from the variable list."""
        off = self.offsets()
        if name not in off:
            return self
        lo, hi = off[name]
        idx = np.r_[0:lo, hi:self.size]
        x = np.asarray(value)
        c = self.c + 2 * np.real(np.vdot(self.b[lo:hi], x))
        b = self.b[idx].copy()
        Q = None
        if self.Q is not None:
            c += np.real(np.vdot(x, self.Q[lo:hi, lo:hi] @ x))
            b += self.Q[np.ix_(idx, np.arange(lo, hi))] @ x
            Q = self.Q[np.ix_(idx, idx)]
        blocks = tuple((n, s) for n, s in self.blocks if n != name)
        return QuadraticConstraint(self.name, self.sense, blocks, Q, b, c, dict(self.g))
