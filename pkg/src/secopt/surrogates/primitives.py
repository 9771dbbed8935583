"""Scalar/matrix bound primitives behind the SCA surrogates."""
import numpy as np


def log_upper(x, x_t):
    """Tangent of the concave log: ln(x) <= ln(x_t) + x/x_t - 1."""
    return np.log(x_t) + x / x_t - 1.0


def neg_log_lower(x, x_t):
    # -ln(x) >= -ln(x_t) - x/x_t + 1
    return -log_upper(x, x_t)


def quad_minorant(H, w, w_t):
    """w^H H w >= 2 Re{w_t^H H w} - w_t^H H w_t for PSD H."""
    return 2 * np.real(np.vdot(w_t, H @ w)) - np.real(np.vdot(w_t, H @ w_t))


def matfrac_minorant(A, C, B, C_t, B_t):
    """Linear minorant of Tr(A C B^-1 C^H), jointly convex in (C, B), tight at (C_t, B_t)."""
    Bi = np.linalg.inv(B_t)
    X = C_t @ Bi
    val = np.trace(A @ X @ C_t.conj().T)
    val -= np.trace(A @ X @ (B - B_t) @ X.conj().T)
    val += np.trace(A @ (C - C_t) @ X.conj().T)
    val += np.trace(A @ X @ (C - C_t).conj().T)
    return np.real(val)


def matfrac(A, C, B):
    return np.real(np.trace(A @ C @ np.linalg.solve(B, C.conj().T)))


def rate_minorant(alpha, beta, alpha_t, beta_t):
    """ln(1 + |a|^2/b) >= value, tight at (alpha_t, beta_t), concave in (alpha, beta)."""
    s = np.abs(alpha_t) ** 2 / beta_t
    return (np.log1p(s) - s + 2 * np.real(np.conj(alpha_t) * alpha) / beta_t
            - s * (beta + np.abs(alpha) ** 2) / (beta_t + np.abs(alpha_t) ** 2))
