"""Pure numpy/scipy versions of the L-functional kernels.

The discrete functional on nodes ``X[k]`` at ``s[k]`` (``s = sqrt(tau)``) is

    L = sum_k h_k * (2 sm_k**2 R_k + 0.5 * sum_j a_kj v_kj**2),

with ``h_k = s[k+1] - s[k]``, ``sm_k`` the segment midpoint and
``v_k = (X[k+1] - X[k]) / h_k``. ``a``, ``R`` and their coordinate
derivatives ``da[k, j, m] = d a_kj / d x_m`` and ``dR`` are evaluated at
segment midpoints by the caller, so each midpoint term contributes half of
its coordinate derivative to both end nodes.
"""
import numpy as np
from scipy.linalg import solve_banded


def lagrangian(s, X, a, da, R, dR):
    h = np.diff(s)
    sm = 0.5 * (s[1:] + s[:-1])
    v = np.diff(X, axis=0) / h[:, None]
    total = float(np.sum(h * (2.0 * sm**2 * R + 0.5 * np.sum(a * v**2, axis=1))))
    dkin = np.einsum("kjm,kj->km", da, v**2)
    shared = 0.5 * h[:, None] * (2.0 * (sm**2)[:, None] * dR + 0.5 * dkin)
    flux = a * v
    grad = np.zeros_like(X)
    grad[1:] += flux + shared
    grad[:-1] += -flux + shared
    return total, grad


def newton_direction(s, a, grad):
    """Solve the kinetic-term Hessian system for the interior nodes.

    The Hessian of ``0.5 * sum h a v**2`` with ``a`` frozen is tridiagonal and
    separable by coordinate. Returns ``-H^{-1} grad`` padded with zero endpoints.
    """
    K = len(s) - 1
    out = np.zeros_like(grad)
    if K < 2:
        return out
    w = a / np.diff(s)[:, None]
    for j in range(a.shape[1]):
        ab = np.zeros((3, K - 1))
        ab[0, 1:] = -w[1:-1, j]
        ab[1] = w[:-1, j] + w[1:, j]
        ab[2, :-1] = -w[1:-1, j]
        out[1:-1, j] = solve_banded((1, 1), ab, -grad[1:-1, j])
    return out
