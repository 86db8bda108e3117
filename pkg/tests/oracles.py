"""Independent closed-form and quadrature oracles used across the tests."""
import math

from scipy import integrate
from scipy.special import gamma


def sphere_l(theta, tau, n=2, r0=1.0, k=None):
    """Reduced distance on a shrinking round sphere from the base at tau = 0.

    With squared radius ``c(tau) = r0^2 + 2k tau`` (``k = n - 1``) the
    Euler-Lagrange equation gives ``c phi' = const`` in ``s = sqrt(tau)``, so
    ``L = int 2 s^2 R ds + theta^2 / (2 I)`` with ``I = int ds / c(s^2)``.
    """
    k = n - 1 if k is None else k
    c = lambda s: r0**2 + 2 * k * s * s  # noqa: E731
    S = math.sqrt(tau)
    I, _ = integrate.quad(lambda s: 1.0 / c(s), 0, S, epsabs=0, epsrel=1e-13)
    P, _ = integrate.quad(lambda s: 2 * s * s * n * (n - 1) / c(s), 0, S, epsabs=0, epsrel=1e-13)
    return (P + 0.5 * theta**2 / I) / (2 * S)


def cylinder_l(phi, dx, tau, n=3, r0=1.0):
    """Product of the sphere-factor problem (dimension n-1) and a static line."""
    return sphere_l(phi, tau, n - 1, r0, k=n - 2) + dx * dx / (4 * tau)


def sphere_reduced_volume(tau, n=2, r0=1.0):
    c = r0**2 + 2 * (n - 1) * tau
    area = 2 * math.pi ** (n / 2) / gamma(n / 2)
    f = lambda t: math.exp(-sphere_l(t, tau, n, r0)) * math.sin(t) ** (n - 1)  # noqa: E731
    val, _ = integrate.quad(f, 0, math.pi, epsabs=0, epsrel=1e-11, limit=200)
    return (4 * math.pi * tau) ** (-n / 2) * area * c ** (n / 2) * val
