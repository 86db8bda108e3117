"""Model geometries and their backward Ricci flows.

Every model is handled through a *reduced chart*: the totally geodesic slice
through a base point and a target point on which curves, metrics and
integrands of symmetric problems live.

==============  ==========================  =================  ==============
model           model coordinates           reduced chart      chart metric
==============  ==========================  =================  ==============
EuclideanSpace  x in R^n                    x                  c * dx^2
RoundSphere     unit vector in R^(n+1)      (phi,)             c * dphi^2
RoundCylinder   (u in S^(n-1), x)           (phi, x)           c_s dphi^2 + c_l dx^2
WarpedProduct   (rho, u in S^(n-1))         (rho, phi)         v drho^2 + u dphi^2
==============  ==========================  =================  ==============

``phi`` is the angle from the base direction along the great circle through
the target, so for functions invariant under the isotropy group it is the
polar angle about the base.

The curvature norm ``|Rm|`` is the Hilbert-Schmidt norm of the curvature
operator on 2-forms, i.e. ``sqrt(sum_{i<j,k<l} R_ijkl^2)`` in an orthonormal
frame. With this convention the unit round 2-sphere has ``|Rm| = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.special import gamma

from .errors import (
    BlowUp,
    GridTooCoarse,
    InvalidGeometry,
    OutOfDomain,
    StepRejected,
)

__all__ = [
    "EuclideanSpace",
    "RoundSphere",
    "RoundCylinder",
    "WarpedProduct",
    "SpacetimePoint",
    "FlatMetric",
    "SphereMetric",
    "CylinderMetric",
    "WarpedMetric",
    "BackwardFlow",
    "ClosedFormFlow",
    "NumericGridFlow",
    "evolve",
    "ricci_tensor",
    "riemann_sup_norm",
    "volume_measure",
    "flow_residual",
    "sphere_area",
    "ball_volume",
]

TAU_SLACK = 1e-12


def sphere_area(m):
    """Area of the unit m-sphere in R^(m+1)."""
    return 2.0 * math.pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0)


def ball_volume(n):
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


def _unit(v):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise InvalidGeometry(f"expected a nonzero direction, got {v}")
    return v / norm


def _angle(u, v):
    u = _unit(u)
    v = _unit(v)
    dot = float(np.dot(u, v))
    perp = float(np.linalg.norm(v - dot * u))
    return math.atan2(perp, dot)


def _circle_point(m, theta):
    return (math.cos(theta), math.sin(theta)) + (0.0,) * (m - 2)


# ---------------------------------------------------------------------------
# model geometries


@dataclass(frozen=True)
class EuclideanSpace:
    n: int

    chart_dim = property(lambda self: self.n)
    periodic = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidGeometry("EuclideanSpace needs n >= 2")

    @property
    def coord_dim(self):
        return self.n

    def point(self, *x):
        return tuple(float(c) for c in x)

    def validate_point(self, coords):
        if len(coords) != self.n:
            raise OutOfDomain(f"expected {self.n} coordinates, got {len(coords)}")

    def chart_pair(self, base, target):
        self.validate_point(base)
        self.validate_point(target)
        return np.asarray(base, float), np.asarray(target, float)


@dataclass(frozen=True)
class RoundSphere:
    n: int
    r0: float = 1.0

    chart_dim = 1
    periodic = (0,)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidGeometry("RoundSphere needs n >= 2")
        if not self.r0 > 0:
            raise InvalidGeometry("RoundSphere needs r0 > 0")

    @property
    def coord_dim(self):
        return self.n + 1

    def point(self, theta):
        """Point at polar angle ``theta`` from the pole ``e_0``."""
        return tuple(_circle_point(self.n + 1, theta))

    def validate_point(self, coords):
        if len(coords) != self.n + 1:
            raise OutOfDomain(f"expected a unit vector in R^{self.n + 1}")
        if abs(np.linalg.norm(coords) - 1.0) > 1e-9:
            raise OutOfDomain("sphere coordinates must be a unit vector")

    def chart_pair(self, base, target):
        self.validate_point(base)
        self.validate_point(target)
        return np.zeros(1), np.array([_angle(base, target)])


@dataclass(frozen=True)
class RoundCylinder:
    """S^(n-1) x R; coordinates are a unit vector in R^n followed by the axial x."""

    n: int
    r0: float = 1.0

    chart_dim = 2
    periodic = (0,)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidGeometry("RoundCylinder needs n >= 3")
        if not self.r0 > 0:
            raise InvalidGeometry("RoundCylinder needs r0 > 0")

    @property
    def coord_dim(self):
        return self.n + 1

    def point(self, theta=0.0, x=0.0):
        return tuple(_circle_point(self.n, theta)) + (float(x),)

    def validate_point(self, coords):
        if len(coords) != self.n + 1:
            raise OutOfDomain(f"expected {self.n + 1} cylinder coordinates")
        if abs(np.linalg.norm(coords[:-1]) - 1.0) > 1e-9:
            raise OutOfDomain("sphere-factor coordinates must be a unit vector")

    def chart_pair(self, base, target):
        self.validate_point(base)
        self.validate_point(target)
        phi = _angle(base[:-1], target[:-1])
        return np.array([0.0, base[-1]]), np.array([phi, target[-1]])


@dataclass(frozen=True)
class WarpedProduct:
    """``d rho^2 + w(rho)^2 g_{S^(n-1)}`` sampled on a strictly increasing grid."""

    n: int
    grid: np.ndarray = field(compare=False)
    warp: np.ndarray = field(compare=False)

    chart_dim = 2
    periodic = (1,)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        warp = np.asarray(self.warp, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "warp", warp)
        if int(self.n) != self.n or self.n < 3:
            raise InvalidGeometry("WarpedProduct needs n >= 3")
        if grid.ndim != 1 or grid.shape != warp.shape:
            raise InvalidGeometry("grid and warp must be 1-d arrays of equal length")
        if len(grid) < 4:
            raise GridTooCoarse("warped product needs at least 4 grid nodes")
        if np.any(np.diff(grid) <= 0):
            raise InvalidGeometry("grid must be strictly increasing")
        if np.any(warp <= 0) or not np.all(np.isfinite(warp)):
            raise InvalidGeometry("warp values must be positive")

    @classmethod
    def cylinder_profile(cls, n=3, r0=1.0, half_length=8.0, nodes=161):
        grid = np.linspace(-half_length, half_length, nodes)
        return cls(n, grid, np.full(nodes, float(r0)))

    @property
    def coord_dim(self):
        return self.n + 1

    def point(self, rho=0.0, theta=0.0):
        return (float(rho),) + tuple(_circle_point(self.n, theta))

    def validate_point(self, coords):
        if len(coords) != self.n + 1:
            raise OutOfDomain(f"expected {self.n + 1} warped-product coordinates")
        if not self.grid[0] <= coords[0] <= self.grid[-1]:
            raise OutOfDomain(f"rho={coords[0]} outside the grid")
        if abs(np.linalg.norm(coords[1:]) - 1.0) > 1e-9:
            raise OutOfDomain("sphere-factor coordinates must be a unit vector")

    def chart_pair(self, base, target):
        self.validate_point(base)
        self.validate_point(target)
        phi = _angle(base[1:], target[1:])
        return np.array([base[0], 0.0]), np.array([target[0], phi])


@dataclass(frozen=True)
class SpacetimePoint:
    coords: tuple
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if not self.tau >= 0:
            raise OutOfDomain("tau must be nonnegative")


# ---------------------------------------------------------------------------
# metric snapshots (a metric at one fixed time)


def _fields_const(m, a_row, R_val):
    d = len(a_row)
    a = np.broadcast_to(np.asarray(a_row, float), (m, d)).copy()
    return a, np.zeros((m, d, d)), np.full(m, float(R_val)), np.zeros((m, d))


@dataclass(frozen=True)
class FlatMetric:
    """``c * delta`` on R^n."""

    n: int
    c: float = 1.0

    chart_dim = property(lambda self: self.n)

    def scaled(self, k):
        return FlatMetric(self.n, self.c * k)

    def coefficients(self):
        return np.array([self.c])

    def ricci_coefficients(self):
        return np.array([0.0])

    def chart_fields(self, pts):
        pts = np.atleast_2d(pts)
        return _fields_const(len(pts), [self.c] * self.n, 0.0)

    def scalar_curvature(self, pts=None):
        return 0.0

    def ricci_eigs(self, pts=None):
        return [(0.0, self.n)]

    def sectional(self, pts=None):
        return [(0.0, self.n * (self.n - 1) // 2)]

    def rm_sup(self):
        return 0.0

    def volume_density(self, rho):
        rho = np.asarray(rho, float)
        return self.c ** (self.n / 2.0) * sphere_area(self.n - 1) * rho ** (self.n - 1)

    def laplacian_terms(self, pts):
        pts = np.atleast_2d(pts)
        return np.full(pts.shape, 1.0 / self.c), np.zeros(pts.shape)


@dataclass(frozen=True)
class SphereMetric:
    """``c * g_round`` on S^n (``c`` is the squared radius)."""

    n: int
    c: float

    chart_dim = 1

    def scaled(self, k):
        return SphereMetric(self.n, self.c * k)

    def coefficients(self):
        return np.array([self.c])

    def ricci_coefficients(self):
        return np.array([float(self.n - 1)])

    def chart_fields(self, pts):
        pts = np.atleast_2d(pts)
        return _fields_const(len(pts), [self.c], self.scalar_curvature())

    def scalar_curvature(self, pts=None):
        return self.n * (self.n - 1) / self.c

    def ricci_eigs(self, pts=None):
        return [((self.n - 1) / self.c, self.n)]

    def sectional(self, pts=None):
        return [(1.0 / self.c, self.n * (self.n - 1) // 2)]

    def rm_sup(self):
        return _rm_from_sectional(self.sectional())

    def volume_density(self, theta):
        theta = np.asarray(theta, float)
        return self.c ** (self.n / 2.0) * sphere_area(self.n - 1) * np.sin(theta) ** (self.n - 1)

    def laplacian_terms(self, pts):
        pts = np.atleast_2d(pts)
        theta = pts[:, 0]
        inv = np.full(pts.shape, 1.0 / self.c)
        drift = ((self.n - 1) / (np.tan(theta) * self.c))[:, None]
        return inv, drift


@dataclass(frozen=True)
class CylinderMetric:
    """``c_s g_{S^(n-1)} + c_l dx^2``."""

    n: int
    c_s: float
    c_l: float = 1.0

    chart_dim = 2

    def scaled(self, k):
        return CylinderMetric(self.n, self.c_s * k, self.c_l * k)

    def coefficients(self):
        return np.array([self.c_s, self.c_l])

    def ricci_coefficients(self):
        return np.array([float(self.n - 2), 0.0])

    def chart_fields(self, pts):
        pts = np.atleast_2d(pts)
        return _fields_const(len(pts), [self.c_s, self.c_l], self.scalar_curvature())

    def scalar_curvature(self, pts=None):
        return (self.n - 1) * (self.n - 2) / self.c_s

    def ricci_eigs(self, pts=None):
        return [(0.0, 1), ((self.n - 2) / self.c_s, self.n - 1)]

    def sectional(self, pts=None):
        return [(1.0 / self.c_s, (self.n - 1) * (self.n - 2) // 2), (0.0, self.n - 1)]

    def rm_sup(self):
        return _rm_from_sectional(self.sectional())

    def cross_section_area(self):
        return sphere_area(self.n - 1) * self.c_s ** ((self.n - 1) / 2.0)

    def volume_density(self, theta, x=None):
        theta = np.asarray(theta, float)
        return (
            sphere_area(self.n - 2)
            * self.c_s ** ((self.n - 1) / 2.0)
            * np.sin(theta) ** (self.n - 2)
            * math.sqrt(self.c_l)
        )

    def laplacian_terms(self, pts):
        pts = np.atleast_2d(pts)
        inv = np.empty(pts.shape)
        inv[:, 0] = 1.0 / self.c_s
        inv[:, 1] = 1.0 / self.c_l
        drift = np.zeros(pts.shape)
        drift[:, 0] = (self.n - 2) / (np.tan(pts[:, 0]) * self.c_s)
        return inv, drift


def _rm_from_sectional(parts):
    return float(math.sqrt(sum(mult * float(np.max(np.abs(k))) ** 2 for k, mult in parts)))


def _fd_weights(x):
    hl = np.diff(x)[:-1]
    hr = np.diff(x)[1:]
    return hl, hr


def _uniform_step(x):
    dx = np.diff(x)
    h = float(np.mean(dx))
    return h if np.max(np.abs(dx - h)) <= 1e-10 * h else None


def grid_d1(x, f):
    """Centered first derivative on a nonuniform grid; zero (Neumann) at the ends."""
    out = np.zeros_like(f)
    h = _uniform_step(x)
    if h is not None:
        out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
        return out
    hl, hr = _fd_weights(x)
    out[1:-1] = (
        -hr / (hl * (hl + hr)) * f[:-2]
        + (hr - hl) / (hl * hr) * f[1:-1]
        + hl / (hr * (hl + hr)) * f[2:]
    )
    return out


def grid_d2(x, f):
    """Centered second derivative; mirrored ghost nodes at the ends."""
    if len(x) < 3:
        raise GridTooCoarse("need at least 3 nodes for a second difference")
    out = np.empty_like(f)
    h = _uniform_step(x)
    if h is not None:
        # uniform stencil keeps constant profiles exactly stationary
        out[1:-1] = (f[:-2] - 2.0 * f[1:-1] + f[2:]) / h**2
        out[0] = 2.0 * (f[1] - f[0]) / h**2
        out[-1] = 2.0 * (f[-2] - f[-1]) / h**2
        return out
    hl, hr = _fd_weights(x)
    out[1:-1] = 2.0 * (
        f[:-2] / (hl * (hl + hr)) - f[1:-1] / (hl * hr) + f[2:] / (hr * (hl + hr))
    )
    out[0] = 2.0 * (f[1] - f[0]) / (x[1] - x[0]) ** 2
    out[-1] = 2.0 * (f[-2] - f[-1]) / (x[-1] - x[-2]) ** 2
    return out


def warped_curvatures(n, rho, v, u):
    """Radial and tangential sectional curvatures of ``v drho^2 + u g_S``."""
    w = np.sqrt(u)
    w1 = grid_d1(rho, w)
    w2 = grid_d2(rho, w)
    v1 = grid_d1(rho, v)
    w_s = w1 / np.sqrt(v)
    w_ss = w2 / v - w1 * v1 / (2.0 * v**2)
    k_rad = -w_ss / w
    k_tan = (1.0 - w_s**2) / w**2
    return k_rad, k_tan


@dataclass(frozen=True)
class WarpedMetric:
    """``v(rho) drho^2 + u(rho) g_{S^(n-1)}`` on a radial grid."""

    n: int
    rho: np.ndarray = field(compare=False)
    v: np.ndarray = field(compare=False)
    u: np.ndarray = field(compare=False)

    chart_dim = 2

    def __post_init__(self):
        for name in ("rho", "v", "u"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if len(self.rho) < 4:
            raise GridTooCoarse("warped metric needs at least 4 grid nodes")
        if np.any(self.v <= 0) or np.any(self.u <= 0):
            raise BlowUp("warped metric coefficients lost positivity")
        k_rad, k_tan = warped_curvatures(self.n, self.rho, self.v, self.u)
        object.__setattr__(self, "k_rad", k_rad)
        object.__setattr__(self, "k_tan", k_tan)
        n = self.n
        object.__setattr__(self, "R", 2 * (n - 1) * k_rad + (n - 1) * (n - 2) * k_tan)

    @classmethod
    def from_geometry(cls, geometry: WarpedProduct):
        return cls(geometry.n, geometry.grid, np.ones_like(geometry.grid), geometry.warp**2)

    def scaled(self, k):
        return WarpedMetric(self.n, self.rho, self.v * k, self.u * k)

    def coefficients(self):
        return np.concatenate([self.v, self.u])

    def ricci_coefficients(self):
        ric_rad = (self.n - 1) * self.k_rad
        ric_tan = self.k_rad + (self.n - 2) * self.k_tan
        return np.concatenate([self.v * ric_rad, self.u * ric_tan])

    def _check_rho(self, rho):
        lo, hi = self.rho[0], self.rho[-1]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(rho < lo - tol) or np.any(rho > hi + tol):
            raise OutOfDomain("radial coordinate outside the warped-product grid")

    def _splines(self):
        cache = self.__dict__.get("_spl")
        if cache is None:
            cache = tuple(
                CubicSpline(self.rho, f, bc_type="clamped") for f in (self.v, self.u, self.R)
            )
            object.__setattr__(self, "_spl", cache)
        return cache

    def chart_fields(self, pts):
        pts = np.atleast_2d(pts)
        rho = pts[:, 0]
        self._check_rho(rho)
        sv, su, sR = self._splines()
        m = len(pts)
        a = np.column_stack([sv(rho), su(rho)])
        da = np.zeros((m, 2, 2))
        da[:, 0, 0] = sv(rho, 1)
        da[:, 1, 0] = su(rho, 1)
        dR = np.zeros((m, 2))
        dR[:, 0] = sR(rho, 1)
        return a, da, sR(rho), dR

    def scalar_curvature(self, pts=None):
        if pts is None:
            return self.R
        rho = np.atleast_2d(pts)[:, 0]
        self._check_rho(rho)
        return np.interp(rho, self.rho, self.R)

    def ricci_eigs(self, pts=None):
        ric_rad = (self.n - 1) * self.k_rad
        ric_tan = self.k_rad + (self.n - 2) * self.k_tan
        if pts is not None:
            rho = np.atleast_2d(pts)[:, 0]
            self._check_rho(rho)
            ric_rad = np.interp(rho, self.rho, ric_rad)
            ric_tan = np.interp(rho, self.rho, ric_tan)
        return [(ric_rad, 1), (ric_tan, self.n - 1)]

    def sectional(self, pts=None):
        k_rad, k_tan = self.k_rad, self.k_tan
        if pts is not None:
            rho = np.atleast_2d(pts)[:, 0]
            self._check_rho(rho)
            k_rad = np.interp(rho, self.rho, k_rad)
            k_tan = np.interp(rho, self.rho, k_tan)
        return [(k_rad, self.n - 1), (k_tan, (self.n - 1) * (self.n - 2) // 2)]

    def rm_norms(self):
        return np.sqrt((self.n - 1) * self.k_rad**2 + (self.n - 1) * (self.n - 2) // 2 * self.k_tan**2)

    def rm_sup(self):
        return float(np.max(self.rm_norms()))

    def volume_density(self, rho, theta):
        rho = np.asarray(rho, float)
        self._check_rho(rho)
        sv, su, _ = self._splines()
        return (
            np.sqrt(sv(rho))
            * su(rho) ** ((self.n - 1) / 2.0)
            * sphere_area(self.n - 2)
            * np.sin(theta) ** (self.n - 2)
        )

    def laplacian_terms(self, pts):
        pts = np.atleast_2d(pts)
        a, da, _, _ = self.chart_fields(pts)
        v, u = a[:, 0], a[:, 1]
        v1, u1 = da[:, 0, 0], da[:, 1, 0]
        inv = np.column_stack([1.0 / v, 1.0 / u])
        drift = np.column_stack(
            [
                ((self.n - 1) * u1 / (2.0 * u) - v1 / (2.0 * v)) / v,
                (self.n - 2) / (np.tan(pts[:, 1]) * u),
            ]
        )
        return inv, drift


# ---------------------------------------------------------------------------
# flows


class BackwardFlow:
    """A solution of d/dtau g = 2 Ric on [0, T].

    Subclasses provide :meth:`snapshot` and :meth:`chart_fields`.
    """

    geometry = None
    T = 0.0
    evolution = "abstract"

    def check_tau(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < -TAU_SLACK) or np.any(tau > self.T * (1 + TAU_SLACK) + TAU_SLACK):
            raise OutOfDomain(f"tau outside [0, {self.T}]")

    def snapshot(self, tau):
        raise NotImplementedError

    def chart_fields(self, pts, taus):
        raise NotImplementedError


class ClosedFormFlow(BackwardFlow):
    """Exact backward flows of the homogeneous models."""

    evolution = "closed_form"

    def __init__(self, geometry, T):
        if isinstance(geometry, WarpedProduct):
            raise InvalidGeometry("warped products evolve numerically")
        if not T > 0:
            raise InvalidGeometry("T must be positive")
        self.geometry = geometry
        self.T = float(T)

    def __repr__(self):
        return f"ClosedFormFlow({self.geometry!r}, T={self.T})"

    def scale(self, tau):
        """Squared radius of the curved factor at ``tau`` (1 for flat space)."""
        g = self.geometry
        tau = np.asarray(tau, dtype=float)
        if isinstance(g, EuclideanSpace):
            return np.ones_like(tau)
        if isinstance(g, RoundSphere):
            return g.r0**2 + 2.0 * (g.n - 1) * tau
        return g.r0**2 + 2.0 * (g.n - 2) * tau

    def snapshot(self, tau):
        self.check_tau(tau)
        g = self.geometry
        c = float(self.scale(tau))
        if isinstance(g, EuclideanSpace):
            return FlatMetric(g.n, 1.0)
        if isinstance(g, RoundSphere):
            return SphereMetric(g.n, c)
        return CylinderMetric(g.n, c, 1.0)

    def chart_fields(self, pts, taus):
        taus = np.asarray(taus, dtype=float)
        self.check_tau(taus)
        g = self.geometry
        m = len(taus)
        d = g.chart_dim
        if isinstance(g, EuclideanSpace):
            return np.ones((m, d)), np.zeros((m, d, d)), np.zeros(m), np.zeros((m, d))
        c = self.scale(taus)
        if isinstance(g, RoundSphere):
            a = c[:, None]
            R = g.n * (g.n - 1) / c
        else:
            a = np.column_stack([c, np.ones(m)])
            R = (g.n - 1) * (g.n - 2) / c
        return a, np.zeros((m, d, d)), R, np.zeros((m, d))


class NumericGridFlow(BackwardFlow):
    """Warped-product flow stored as ``(v, u)`` profiles at output times."""

    evolution = "numeric_grid"

    def __init__(self, geometry: WarpedProduct, taus, V, U):
        self.geometry = geometry
        self.taus = np.asarray(taus, dtype=float)
        self.V = np.asarray(V, dtype=float)
        self.U = np.asarray(U, dtype=float)
        self.T = float(self.taus[-1])
        self.rho = geometry.grid
        self._snaps = [WarpedMetric(geometry.n, self.rho, v, u) for v, u in zip(self.V, self.U)]
        Rs = np.array([s.R for s in self._snaps])
        self._spl = tuple(
            RectBivariateSpline(self.taus, self.rho, F, kx=1, ky=3, s=0) for F in (self.V, self.U, Rs)
        )

    def __repr__(self):
        return f"NumericGridFlow(n={self.geometry.n}, nodes={len(self.rho)}, T={self.T}, steps={len(self.taus)})"

    def profile(self, tau):
        """Warp profile ``(rho, w)`` at ``tau`` (interpolated linearly in tau)."""
        snap = self.snapshot(tau)
        return snap.rho, np.sqrt(snap.u)

    def snapshot(self, tau):
        self.check_tau(tau)
        tau = float(np.clip(tau, 0.0, self.T))
        k = int(np.searchsorted(self.taus, tau, side="right")) - 1
        k = min(max(k, 0), len(self.taus) - 2)
        t0, t1 = self.taus[k], self.taus[k + 1]
        th = (tau - t0) / (t1 - t0)
        if th <= 0.0:
            return self._snaps[k]
        if th >= 1.0:
            return self._snaps[k + 1]
        return WarpedMetric(
            self.geometry.n,
            self.rho,
            (1 - th) * self.V[k] + th * self.V[k + 1],
            (1 - th) * self.U[k] + th * self.U[k + 1],
        )

    def chart_fields(self, pts, taus):
        pts = np.atleast_2d(pts)
        taus = np.clip(np.asarray(taus, dtype=float), 0.0, None)
        self.check_tau(taus)
        taus = np.minimum(taus, self.T)
        rho = pts[:, 0]
        lo, hi = self.rho[0], self.rho[-1]
        if np.any(rho < lo - 1e-12) or np.any(rho > hi + 1e-12):
            raise OutOfDomain("radial coordinate outside the warped-product grid")
        sv, su, sR = self._spl
        m = len(pts)
        a = np.column_stack([sv.ev(taus, rho), su.ev(taus, rho)])
        da = np.zeros((m, 2, 2))
        da[:, 0, 0] = sv.ev(taus, rho, dy=1)
        da[:, 1, 0] = su.ev(taus, rho, dy=1)
        dR = np.zeros((m, 2))
        dR[:, 0] = sR.ev(taus, rho, dy=1)
        return a, da, sR.ev(taus, rho), dR


# ---------------------------------------------------------------------------
# evolution


def _warped_rate(n, rho, y):
    N = len(rho)
    v, u = y[:N], y[N:]
    if np.any(v <= 0) or np.any(u <= 0) or not np.all(np.isfinite(y)):
        raise BlowUp("warped metric coefficients lost positivity")
    k_rad, k_tan = warped_curvatures(n, rho, v, u)
    ric_rad = (n - 1) * k_rad
    ric_tan = k_rad + (n - 2) * k_tan
    return np.concatenate([2.0 * v * ric_rad, 2.0 * u * ric_tan])


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_warped(geometry, T, stride, step_tol, min_step, ceiling):
    n, rho = geometry.n, geometry.grid
    N = len(rho)

    def rate(y):
        return _warped_rate(n, rho, y)

    y = np.concatenate([np.ones(N), geometry.warp**2])
    n_out = int(math.ceil(T / stride - 1e-9))
    out_taus = np.linspace(0.0, T, n_out + 1)
    states = [y.copy()]
    dt = stride
    tau = 0.0
    for target in out_taus[1:]:
        while tau < target - 1e-14 * max(1.0, target):
            dt = min(dt, target - tau)
            full = _rk4(rate, y, dt)
            half = _rk4(rate, _rk4(rate, y, 0.5 * dt), 0.5 * dt)
            err = float(np.max(np.abs(full - half))) / (1.0 + float(np.max(np.abs(half))))
            if err > step_tol:
                dt *= 0.5
                if dt < min_step:
                    raise StepRejected(f"step tolerance {step_tol} unreachable at tau={tau}")
                continue
            y = half + (half - full) / 15.0
            tau += dt
            dt = min(2.0 * dt, stride)
        tau = target
        k_rad, k_tan = warped_curvatures(n, rho, y[:N], y[N:])
        rm = float(np.max(np.sqrt((n - 1) * k_rad**2 + (n - 1) * (n - 2) // 2 * k_tan**2)))
        if not np.isfinite(rm) or rm > ceiling:
            raise BlowUp(f"|Rm| = {rm:.3g} exceeds ceiling {ceiling:.3g} at tau={tau}")
        states.append(y.copy())
    states = np.array(states)
    return out_taus, states[:, :N], states[:, N:]


def evolve(
    geometry,
    T,
    step,
    *,
    flow_tolerance=1e-6,
    step_tolerance=1e-10,
    min_step=1e-6,
    curvature_ceiling=1e6,
):
    """Evolve ``geometry`` by the backward Ricci flow on ``[0, T]``.

    Homogeneous models get their exact closed-form flow. Warped products are
    integrated with step-doubling RK4 on the ``(v, u)`` coefficients; output is
    stored every ``step`` and the stride is halved until the centered
    difference residual of d/dtau g - 2 Ric is below ``flow_tolerance``.
    """
    if not T > 0 or not step > 0:
        raise InvalidGeometry("T and step must be positive")
    if not isinstance(geometry, WarpedProduct):
        flow = ClosedFormFlow(geometry, T)
        if flow.snapshot(0.0).rm_sup() > curvature_ceiling:
            raise BlowUp("initial curvature exceeds the ceiling")
        return flow
    stride = min(step, T)
    while True:
        taus, V, U = _integrate_warped(
            geometry, T, stride, step_tolerance, min_step, curvature_ceiling
        )
        flow = NumericGridFlow(geometry, taus, V, U)
        if len(taus) < 3 or flow_residual(flow) <= flow_tolerance:
            return flow
        stride *= 0.5
        if stride < min_step:
            raise StepRejected("flow residual tolerance unreachable at the minimum stride")


def flow_residual(flow, taus=None, h=None):
    """Sup norm of the centered-difference d/dtau g minus 2 Ric.

    For numeric flows the default samples are the interior stored steps with
    the storage stride as difference step.
    """
    if taus is None:
        if isinstance(flow, NumericGridFlow):
            ts = flow.taus
            worst = 0.0
            for k in range(1, len(ts) - 1):
                snap = flow._snaps[k]
                fd = (flow._snaps[k + 1].coefficients() - flow._snaps[k - 1].coefficients()) / (
                    ts[k + 1] - ts[k - 1]
                )
                worst = max(worst, float(np.max(np.abs(fd - 2 * snap.ricci_coefficients()))))
            return worst
        taus = np.linspace(0.1, 0.9, 5) * flow.T
    worst = 0.0
    for tau in np.atleast_1d(taus):
        hh = h if h is not None else 1e-4 * max(1.0, tau)
        lo, hi = max(tau - hh, 0.0), min(tau + hh, flow.T)
        fd = (flow.snapshot(hi).coefficients() - flow.snapshot(lo).coefficients()) / (hi - lo)
        ric = flow.snapshot(tau).ricci_coefficients()
        worst = max(worst, float(np.max(np.abs(fd - 2 * ric))))
    return worst


# ---------------------------------------------------------------------------
# point-level operations


def _chart_point(flow, p):
    geometry = flow.geometry
    coords = p.coords
    base, _ = geometry.chart_pair(coords, coords)
    return base[None, :]


def ricci_tensor(flow, p: SpacetimePoint):
    """Ricci tensor at ``p`` in a g-orthonormal frame adapted to the symmetry.

    The frame lists the radial or axial direction first (when present) and the
    sphere-factor directions after it, so the diagonal holds the Ricci
    eigenvalues relative to ``g(tau)``.
    """
    flow.check_tau(p.tau)
    pt = _chart_point(flow, p)
    parts = flow.snapshot(p.tau).ricci_eigs(pt)
    diag = []
    for value, mult in parts:
        diag.extend([float(np.ravel(value)[0])] * mult)
    return np.diag(diag)


def riemann_sup_norm(flow, tau):
    """Sup over the model of the curvature-operator norm ``|Rm|`` at ``tau``."""
    flow.check_tau(tau)
    return float(flow.snapshot(tau).rm_sup())


def volume_measure(flow, tau):
    """Density reducing symmetric integrals over M to quadrature on the chart.

    Flat: function of the radius about a point. Sphere: of the polar angle.
    Cylinder: of (polar angle on the sphere factor, axial x). Warped product:
    of (rho, polar angle).
    """
    flow.check_tau(tau)
    return flow.snapshot(tau).volume_density
