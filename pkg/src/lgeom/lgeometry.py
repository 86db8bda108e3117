"""L-functional, reduced distance, reduced volume and the conjugate heat residual.

Curves are parametrized by ``s = sqrt(tau)``. Under this substitution the
L-functional becomes

    L(gamma) = int_0^{sqrt(tau1)} (2 s^2 R(gamma(s), s^2) + 0.5 |gamma'(s)|^2_{g(s^2)}) ds,

which has no singularity at ``s = 0``. Curves are polylines in ``s`` with
coordinates in the reduced chart of the model (see :mod:`lgeom.geometry`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv, gammaincc, gammainccinv

from . import kernels
from .errors import (
    DegenerateCurve,
    DomainMismatch,
    NoConvergence,
    NonSmoothPoint,
    OutOfDomain,
    TailNotNegligible,
)
from .geometry import (
    EuclideanSpace,
    RoundCylinder,
    RoundSphere,
    SpacetimePoint,
    WarpedProduct,
    sphere_area,
)

log = logging.getLogger(__name__)

__all__ = [
    "SpacetimeCurve",
    "ReducedDistance",
    "ReducedVolumeSample",
    "l_functional",
    "segment_integral",
    "reduced_distance",
    "reduced_distance_chart",
    "reduced_volume",
    "conjugate_heat_residual",
]


@dataclass(frozen=True, eq=False)
class SpacetimeCurve:
    """Polyline ``s_k -> coords_k`` with ``s_0 = 0`` and ``s_K = sqrt(tau1)``."""

    s: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.s, dtype=float)
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.coords, dtype=float)))
        if X.shape[0] != len(s) and X.shape[1] == len(s):
            X = np.ascontiguousarray(X.T)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "coords", X)
        if s.ndim != 1 or X.shape[0] != len(s):
            raise DomainMismatch("one coordinate row per s sample is required")
        if len(s) < 3:
            raise DegenerateCurve("a curve needs at least K = 2 segments")
        if s[0] != 0.0:
            raise DomainMismatch("curves start at s = 0 (tau = 0)")
        if np.any(np.diff(s) <= 0):
            raise DegenerateCurve("s samples must be strictly increasing")

    @property
    def K(self):
        return len(self.s) - 1

    @property
    def tau1(self):
        return float(self.s[-1] ** 2)

    @property
    def base(self):
        return self.coords[0]

    @property
    def target(self):
        return self.coords[-1]

    @classmethod
    def straight(cls, base, target, tau1, segments=64):
        """Chart-straight curve, linear in ``s``."""
        s = np.linspace(0.0, math.sqrt(tau1), segments + 1)
        t = (s / s[-1])[:, None]
        b = np.asarray(base, float)
        return cls(s, b + t * (np.asarray(target, float) - b))

    @classmethod
    def from_tau_path(cls, path, tau1, segments=64):
        """Sample ``path(tau) -> chart coords`` on a uniform grid in ``s``."""
        s = np.linspace(0.0, math.sqrt(tau1), segments + 1)
        return cls(s, np.array([np.atleast_1d(path(si * si)) for si in s]))

    def tau_velocity_sq(self, flow):
        """``|d gamma / d tau|^2_{g(tau)}`` at segment midpoints (with the midpoint taus)."""
        s, X = self.s, self.coords
        h = np.diff(s)
        sm = 0.5 * (s[1:] + s[:-1])
        vel = np.diff(X, axis=0) / h[:, None] / (2.0 * sm[:, None])
        a, _, _, _ = flow.chart_fields(0.5 * (X[1:] + X[:-1]), sm**2)
        return np.sum(a * vel**2, axis=1), sm**2


def segment_integral(flow, s, X, with_grad=False):
    """Midpoint-rule integral of the s-Lagrangian over the polyline ``(s, X)``.

    Unlike :func:`l_functional` the polyline may start at any ``s``; this is
    what per-piece integrals over ``[sqrt(tau_j), sqrt(tau_{j+1})]`` use.
    """
    s = np.ascontiguousarray(s, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    sm = 0.5 * (s[1:] + s[:-1])
    a, da, R, dR = flow.chart_fields(0.5 * (X[1:] + X[:-1]), sm * sm)
    L, grad = kernels.lagrangian(
        s,
        X,
        np.ascontiguousarray(a, dtype=float),
        np.ascontiguousarray(da, dtype=float),
        np.ascontiguousarray(R, dtype=float),
        np.ascontiguousarray(dR, dtype=float),
    )
    if with_grad:
        return L, grad, a
    return L


def _check_curve(flow, curve):
    d = flow.geometry.chart_dim
    if curve.coords.shape[1] != d:
        raise DomainMismatch(f"curve has {curve.coords.shape[1]} chart coordinates, flow needs {d}")
    if curve.tau1 > flow.T * (1 + 1e-12):
        raise DomainMismatch(f"curve ends at tau={curve.tau1} beyond the flow horizon {flow.T}")


def l_functional(flow, curve: SpacetimeCurve):
    """L-functional of ``curve`` on ``flow`` (composite midpoint rule in s)."""
    _check_curve(flow, curve)
    return segment_integral(flow, curve.s, curve.coords)


@dataclass(frozen=True, eq=False)
class ReducedDistance:
    value: float
    L: float
    curve: SpacetimeCurve
    converged: bool
    iterations: int
    grad_norm: float


def _minimize(flow, s, X0, grad_tol, max_iter):
    X = X0.copy()
    L, g, a = segment_integral(flow, s, X, with_grad=True)
    it = 0
    gn = float("inf")
    converged = False
    for it in range(1, max_iter + 1):
        g[0] = 0.0
        g[-1] = 0.0
        gn = float(np.linalg.norm(g))
        if gn <= grad_tol * (1.0 + abs(L)):
            converged = True
            break
        p = kernels.newton_direction(s, np.ascontiguousarray(a), np.ascontiguousarray(g))
        slope = float(np.sum(p * g))
        if not slope < 0:
            p = -g
            slope = -gn * gn
        if -slope <= 1e-15 * (1.0 + abs(L)):
            # Newton decrement at roundoff level: nothing left to gain
            converged = True
            break
        t = 1.0
        accepted = False
        for _ in range(50):
            Xt = X + t * p
            Lt, gt, at = segment_integral(flow, s, Xt, with_grad=True)
            if Lt <= L + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        X, L, g, a = Xt, Lt, gt, at
    else:
        g[0] = 0.0
        g[-1] = 0.0
        gn = float(np.linalg.norm(g))
        converged = gn <= grad_tol * (1.0 + abs(L))
    return X, L, converged, it, gn


def reduced_distance_chart(
    flow,
    base,
    target,
    tau1,
    *,
    segments=64,
    restarts=3,
    seed=0,
    grad_tol=1e-9,
    max_iter=200,
    images=True,
    s_nodes=None,
):
    """Reduced distance between chart points ``(base, 0)`` and ``(target, tau1)``.

    Starts from the chart-straight s-linear curve, from its images winding once
    around each periodic chart coordinate (when ``images``), and from
    ``restarts`` random perturbations of the straight start. Every start is
    minimized with Newton steps on the kinetic-term Hessian and Armijo
    backtracking; the lowest L wins.

    ``s_nodes`` replaces the uniform grid in ``s = sqrt(tau)``; graded grids
    resolve curvature near ``s = 0`` when ``tau1`` is large.
    """
    base = np.asarray(base, dtype=float)
    target = np.asarray(target, dtype=float)
    d = flow.geometry.chart_dim
    if base.shape != (d,) or target.shape != (d,):
        raise DomainMismatch(f"chart points must have {d} coordinates")
    if not tau1 > 0:
        raise DomainMismatch("tau1 must be positive")
    if tau1 > flow.T * (1 + 1e-12):
        raise DomainMismatch(f"tau1={tau1} beyond the flow horizon {flow.T}")
    if s_nodes is None:
        s = np.linspace(0.0, math.sqrt(tau1), segments + 1)
    else:
        s = np.asarray(s_nodes, dtype=float)
        if s[0] != 0.0 or np.any(np.diff(s) <= 0) or abs(s[-1] - math.sqrt(tau1)) > 1e-12 * s[-1]:
            raise DomainMismatch("s_nodes must increase from 0 to sqrt(tau1)")
        s = s.copy()
        s[-1] = math.sqrt(tau1)
    frac = (s / s[-1])[:, None]
    ends = [target]
    if images:
        for j in flow.geometry.periodic:
            for k in (-1, 1):
                img = target.copy()
                img[j] += 2.0 * math.pi * k
                ends.append(img)
    starts = [base + frac * (e - base) for e in ends]
    if restarts:
        rng = np.random.default_rng(seed)
        scale = 0.1 * (float(np.linalg.norm(target - base)) + math.sqrt(tau1) * 0.1 + 1e-3)
        bump = np.sin(np.pi * frac)
        for _ in range(restarts):
            noise = rng.standard_normal((len(s), d)) * scale * bump
            starts.append(starts[0] + noise)
    best = None
    for idx, X0 in enumerate(starts):
        X0 = np.ascontiguousarray(X0)
        X0[0] = base
        try:
            X, L, conv, it, gn = _minimize(flow, s, X0, grad_tol, max_iter)
        except OutOfDomain as exc:
            # winding images and perturbed starts may leave a finite grid
            if idx == 0:
                raise
            log.debug("start %d discarded: %s", idx, exc)
            continue
        if best is None or L < best[1] - 1e-14 * (1 + abs(L)):
            best = (X, L, conv, it, gn)
    X, L, conv, it, gn = best
    value = L / (2.0 * math.sqrt(tau1))
    return ReducedDistance(value, L, SpacetimeCurve(s, X), conv, it, gn)


def _as_coords(p):
    return p.coords if isinstance(p, SpacetimePoint) else tuple(float(c) for c in p)


def reduced_distance(flow, base, target, tau1, **kwargs):
    """Reduced distance ``l_{(base,0)}(target, tau1)`` with its minimizing curve.

    ``base`` and ``target`` are model coordinates (or :class:`SpacetimePoint`).
    Non-convergence is reported through ``ReducedDistance.converged``; pass
    ``strict=True`` to raise :class:`NoConvergence` instead.
    """
    strict = kwargs.pop("strict", False)
    b, t = flow.geometry.chart_pair(_as_coords(base), _as_coords(target))
    res = reduced_distance_chart(flow, b, t, tau1, **kwargs)
    if strict and not res.converged:
        raise NoConvergence(f"minimizer did not converge (|grad| = {res.grad_norm:.3g})", res)
    return res


@dataclass(frozen=True)
class ReducedVolumeSample:
    tau: float
    value: float
    quadrature_error: float
    tail: float = 0.0
    flagged: bool = False

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("reduced volume must be positive")


def _gl(a, b, m):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


class _LTable:
    """Evaluates l at many chart targets and tracks convergence flags."""

    def __init__(self, flow, base, tau, opts):
        self.flow, self.base, self.tau, self.opts = flow, base, tau, opts
        self.flagged = False
        self.cache = {}

    def __call__(self, target):
        key = tuple(np.round(target, 15))
        if key not in self.cache:
            r = reduced_distance_chart(self.flow, self.base, np.asarray(target), self.tau, **self.opts)
            self.flagged |= not r.converged
            self.cache[key] = r.value
        return self.cache[key]


# beyond _ANGULAR_SPAN Gaussian widths the integrand is below exp(-SPAN^2 / 4)
_ANGULAR_SPAN = 12.0
_ANGULAR_WEIGHT = math.exp(-_ANGULAR_SPAN**2 / 4.0)


def _angular_cut(flow, tau, coefficient):
    """Polar angle beyond which exp(-l) is negligible.

    Uses ``l >= c_min * theta^2 / (4 tau)``, with ``c_min`` the smallest
    sphere-factor coefficient over sampled times in ``[0, tau]``, since the
    scalar-curvature part of ``l`` is nonnegative on these models.
    """
    c_min = min(coefficient(flow.snapshot(t)) for t in (0.0, 0.5 * tau, tau))
    return min(math.pi, _ANGULAR_SPAN * math.sqrt(tau / c_min))


def _radial_rule(lfun, base, tau, n, X, m, snap):
    rho, w = _gl(0.0, X, m)
    vals = []
    for r in rho:
        t = base.copy()
        t[0] += r
        vals.append(lfun(t))
    dens = snap.volume_density(rho)
    return float(np.sum(w * dens * np.exp(-np.array(vals)))) * (4 * math.pi * tau) ** (-n / 2)


def reduced_volume(
    flow,
    base,
    tau,
    cutoff=None,
    *,
    nodes=None,
    tail_tolerance=1e-6,
    segments=48,
    restarts=0,
    seed=0,
    grad_tol=1e-9,
):
    """Reduced volume based at ``(base, 0)`` by symmetric quadrature.

    ``l`` is evaluated with :func:`reduced_distance_chart` at Gauss-Legendre
    nodes of the reduced chart. ``quadrature_error`` adds a Gaussian tail bound
    beyond ``cutoff`` to the difference against a rule with half the nodes.
    """
    flow.check_tau(tau)
    if not tau > 0:
        raise DomainMismatch("reduced volume needs tau > 0")
    geometry = flow.geometry
    n = geometry.n
    b, _ = geometry.chart_pair(_as_coords(base), _as_coords(base))
    snap = flow.snapshot(tau)
    opts = dict(segments=segments, restarts=restarts, seed=seed, grad_tol=grad_tol)
    lfun = _LTable(flow, b, tau, opts)
    norm = (4 * math.pi * tau) ** (-n / 2)
    half_tol = tail_tolerance / 10.0

    if isinstance(geometry, EuclideanSpace):
        if cutoff is None:
            cutoff = 2.0 * math.sqrt(tau) * math.sqrt(float(gammainccinv(n / 2.0, half_tol)))
        tail = float(gammaincc(n / 2.0, cutoff**2 / (4.0 * tau)))
        m = nodes or 48
        q = _radial_rule(lfun, b, tau, n, cutoff, m, snap)
        q2 = _radial_rule(lfun, b, tau, n, cutoff, m // 2, snap)

    elif isinstance(geometry, RoundSphere):
        radius = math.sqrt(snap.c)
        theta_max = math.pi if cutoff is None else min(math.pi, cutoff / radius)
        theta_max = min(theta_max, _angular_cut(flow, tau, lambda sn: sn.c))
        m = nodes or 48

        def rule(k):
            th, w = _gl(0.0, theta_max, k)
            vals = np.array([lfun(np.array([t])) for t in th])
            return norm * float(np.sum(w * snap.volume_density(th) * np.exp(-vals)))

        q, q2 = rule(m), rule(m // 2)
        tail = 0.0
        if theta_max < math.pi:
            tail += norm * sphere_area(n) * snap.c ** (n / 2.0) * _ANGULAR_WEIGHT
        if theta_max < math.pi and cutoff is not None:
            rest = sphere_area(n) * snap.c ** (n / 2.0) * float(
                np.mean(np.sin(np.linspace(theta_max, math.pi, 64)) ** (n - 1))
            ) * (math.pi - theta_max) / math.pi
            tail = norm * rest * math.exp(-lfun(np.array([theta_max])))

    elif isinstance(geometry, (RoundCylinder, WarpedProduct)):
        cyl = isinstance(geometry, RoundCylinder)
        ax = 1 if cyl else 0
        ang = 0 if cyl else 1
        if cyl:
            area = snap.cross_section_area()
            line = math.sqrt(snap.c_l)
        else:
            area = sphere_area(n - 1) * float(np.max(snap.u)) ** ((n - 1) / 2.0)
            line = math.sqrt(float(np.max(snap.v)))
        # l >= (axial distance)^2 / (4 tau) on the flat line factor
        pref = norm * area * line * math.sqrt(4 * math.pi * tau)
        if cutoff is None:
            cutoff = 2.0 * math.sqrt(tau) * float(erfcinv(min(1.0, half_tol / max(pref, 1e-300))))
            cutoff /= line
        lo, hi = -cutoff, cutoff
        if not cyl:
            lo = max(lo, geometry.grid[0] - b[0])
            hi = min(hi, geometry.grid[-1] - b[0])
        tail = 0.5 * pref * float(
            erfc(-lo * line / (2 * math.sqrt(tau))) + erfc(hi * line / (2 * math.sqrt(tau)))
        )
        mt, mx = nodes or (20, 32)

        if cyl:
            theta_max = _angular_cut(flow, tau, lambda sn: sn.c_s)
        else:
            theta_max = _angular_cut(flow, tau, lambda sn: float(np.min(sn.u)))
        if theta_max < math.pi:
            tail += pref * _ANGULAR_WEIGHT

        def rule(kt, kx):
            th, wt = _gl(0.0, theta_max, kt)
            if cyl:
                # l is even in the axial offset
                xs, wx = _gl(0.0, hi, kx)
                wx = 2.0 * wx
            else:
                xs, wx = _gl(lo, hi, kx)
            total = 0.0
            for xi, wxi in zip(xs, wx):
                vals = []
                for t in th:
                    p = b.copy()
                    p[ax] += xi
                    p[ang] = t
                    vals.append(lfun(p))
                if cyl:
                    dens = snap.volume_density(th)
                else:
                    dens = snap.volume_density(np.full_like(th, b[0] + xi), th)
                total += wxi * float(np.sum(wt * dens * np.exp(-np.array(vals))))
            return norm * total

        q, q2 = rule(mt, mx), rule(max(mt // 2, 2), max(mx // 2, 2))
    else:  # pragma: no cover
        raise DomainMismatch(f"unsupported geometry {geometry!r}")

    if tail > tail_tolerance:
        raise TailNotNegligible(f"tail bound {tail:.3g} exceeds {tail_tolerance:.3g}")
    return ReducedVolumeSample(float(tau), q, abs(q - q2) + tail, tail, lfun.flagged)


def _residual_over_u(lfun, flow, b, t, tau, h, k):
    """(d/dtau - Laplacian + R) u / u for u = (4 pi tau)^(-n/2) exp(-l)."""
    n = flow.geometry.n
    d = len(t)
    l0 = lfun(t, tau)
    l_tau = (lfun(t, tau + k) - lfun(t, tau - k)) / (2 * k)
    grad = np.empty(d)
    hess = np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        lp, lm = lfun(t + e, tau), lfun(t - e, tau)
        grad[j] = (lp - lm) / (2 * h)
        hess[j] = (lp - 2 * l0 + lm) / h**2
    snap = flow.snapshot(tau)
    inv, drift = snap.laplacian_terms(t[None, :])
    _, _, R, _ = flow.chart_fields(t[None, :], np.array([tau]))
    lap = float(np.sum(inv[0] * hess + drift[0] * grad))
    grad_sq = float(np.sum(inv[0] * grad**2))
    return -n / (2 * tau) - l_tau + lap - grad_sq + float(R[0]), l0


def conjugate_heat_residual(
    flow,
    base,
    p: SpacetimePoint,
    *,
    h=2e-3,
    dtau=None,
    segments=64,
    smooth_tol=1e-2,
    return_details=False,
):
    """``(d/dtau - Laplacian + R) u`` at ``p`` for ``u = (4 pi tau)^(-n/2) e^{-l}``.

    Centered differences of ``l`` in the reduced chart and in tau at steps
    ``h`` and ``h/2``; the Richardson combination is returned. Raises
    :class:`NonSmoothPoint` when the two estimates disagree by more than
    ``smooth_tol`` relative to ``u``, which is what a kink of ``l`` (cut
    locus) produces.
    """
    tau = p.tau
    if dtau is None:
        dtau = 1e-3 * tau
    if not (tau - dtau > 0 and tau + dtau <= flow.T):
        raise DomainMismatch("tau stencil leaves the flow domain")
    b, t = flow.geometry.chart_pair(_as_coords(base), p.coords)
    for j in flow.geometry.periodic:
        if min(t[j], math.pi - t[j]) < 2 * h:
            raise DomainMismatch("point lies on the axis of the polar chart")
    flagged = []

    def lfun(target, tt):
        r = reduced_distance_chart(flow, b, target, tt, segments=segments, restarts=0)
        if not r.converged:
            flagged.append(tt)
        return r.value

    r1, l0 = _residual_over_u(lfun, flow, b, t, tau, h, dtau)
    r2, _ = _residual_over_u(lfun, flow, b, t, tau, h / 2, dtau / 2)
    if flagged:
        raise NoConvergence("reduced distance did not converge on the stencil")
    u = (4 * math.pi * tau) ** (-flow.geometry.n / 2) * math.exp(-l0)
    if abs(r1 - r2) > smooth_tol:
        raise NonSmoothPoint(
            f"stencil estimates {r1 * u:.3e} and {r2 * u:.3e} disagree; l is not smooth here"
        )
    value = u * (4 * r2 - r1) / 3
    if return_details:
        return value, {"u": u, "l": l0, "coarse": u * r1, "fine": u * r2}
    return value
