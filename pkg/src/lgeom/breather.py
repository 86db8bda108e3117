"""From a shrinking breather to a Type I ancient flow with a bounded reduced distance.

Starting from a backward flow ``g0`` on ``[0, 1]`` with ``alpha g0(1) = phi^* g0(0)``
for some ``alpha in (0, 1)``, this module

* builds the ladder ``tau_i = sum_{j<=i} alpha^{-j}`` with ``C0 = 1/(1 - alpha)``,
* concatenates ``g_i(tau) = alpha^{-i} (phi^i)^* g0(alpha^i (tau - tau_{i-1}))``
  on ``[tau_{i-1}, tau_i]`` into an ancient flow and checks the junctions,
* certifies ``tau |Rm| <= B = C C0``,
* builds the comparison curves through ``x_i = phi^{-(i+1)}(y)`` and bounds
  ``l(x_i, tau_i)`` uniformly in ``i``,
* exposes the rescaled flows ``tau_i^{-1} g(tau tau_i)`` for ``tau in [1, 1/alpha]``.

Every diffeomorphism used here acts diagonally and linearly on the reduced
chart, so pullbacks reduce to rescaling chart coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlphaOutOfRange,
    ConfigError,
    EndpointMismatch,
    GluingFailure,
    PullbackUndefined,
)
from .geometry import (
    BackwardFlow,
    ClosedFormFlow,
    CylinderMetric,
    EuclideanSpace,
    FlatMetric,
    RoundCylinder,
    RoundSphere,
    SphereMetric,
    WarpedMetric,
    WarpedProduct,
    evolve,
)
from .lgeometry import (
    SpacetimeCurve,
    l_functional,
    reduced_distance_chart,
    segment_integral,
)

__all__ = [
    "FlatDilation",
    "CylinderMap",
    "Identity",
    "GridMap",
    "BreatherSpec",
    "BreatherReport",
    "TauLadder",
    "AncientFlow",
    "TypeIReport",
    "LBoundCertificate",
    "RescaledFlow",
    "make_breather_spec",
    "flat_breather",
    "sphere_breather",
    "cylinder_breather",
    "verify_breather",
    "build_ladder",
    "build_ancient_flow",
    "gluing_residuals",
    "type_one_certificate",
    "base_point_sequence",
    "default_sigma",
    "build_comparison_curves",
    "l_bound_certificate",
    "rescaled_sequence",
]


# ---------------------------------------------------------------------------
# diffeomorphism descriptors


@dataclass(frozen=True)
class FlatDilation:
    """``x -> p + sqrt(alpha) Q (x - p)`` on Euclidean space."""

    alpha: float
    fixed_point: tuple | None = None
    rotation: np.ndarray | None = field(default=None, compare=False)

    def _parts(self, d):
        p = np.zeros(d) if self.fixed_point is None else np.asarray(self.fixed_point, float)
        Q = np.eye(d) if self.rotation is None else np.asarray(self.rotation, float)
        return p, Q

    def chart_map(self, pts, power):
        pts = np.atleast_2d(np.asarray(pts, float))
        p, Q = self._parts(pts.shape[1])
        Qk = np.linalg.matrix_power(Q, power)
        mapped = p + self.alpha ** (power / 2.0) * (pts - p) @ Qk.T
        return mapped, np.full(pts.shape[1], self.alpha ** (power / 2.0))

    def apply(self, geometry, coords, power=1):
        return tuple(self.chart_map(coords, power)[0][0])

    def pullback(self, snap, power):
        if not isinstance(snap, FlatMetric):
            raise PullbackUndefined("a flat dilation only acts on flat metrics")
        return snap.scaled(self.alpha**power)


@dataclass(frozen=True)
class CylinderMap:
    """Identity on the sphere factor, ``x -> sqrt(alpha) x`` on the line."""

    alpha: float

    def chart_map(self, pts, power):
        pts = np.array(np.atleast_2d(pts), dtype=float)
        k = self.alpha ** (power / 2.0)
        pts[:, 1] *= k
        return pts, np.array([1.0, k])

    def apply(self, geometry, coords, power=1):
        coords = list(coords)
        coords[-1] *= self.alpha ** (power / 2.0)
        return tuple(coords)

    def pullback(self, snap, power):
        if not isinstance(snap, CylinderMetric):
            raise PullbackUndefined("a cylinder map only acts on cylinder metrics")
        return CylinderMetric(snap.n, snap.c_s, snap.c_l * self.alpha**power)


@dataclass(frozen=True)
class Identity:
    def chart_map(self, pts, power):
        pts = np.array(np.atleast_2d(pts), dtype=float)
        return pts, np.ones(pts.shape[1])

    def apply(self, geometry, coords, power=1):
        return tuple(coords)

    def pullback(self, snap, power):
        return snap


@dataclass(frozen=True)
class GridMap:
    """``rho -> center + scale (rho - center)`` on a warped-product grid."""

    scale: float
    center: float = 0.0
    grid: tuple | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("GridMap scale must be positive (orientation-preserving)")

    def _map(self, rho, power):
        return self.center + self.scale**power * (np.asarray(rho, float) - self.center)

    def _check(self, rho):
        if self.grid is None:
            return
        lo, hi = self.grid
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(rho < lo - tol) or np.any(rho > hi + tol):
            raise PullbackUndefined("grid map sends a sample outside the grid")

    def chart_map(self, pts, power):
        pts = np.array(np.atleast_2d(pts), dtype=float)
        pts[:, 0] = self._map(pts[:, 0], power)
        self._check(pts[:, 0])
        return pts, np.array([self.scale**power, 1.0])

    def apply(self, geometry, coords, power=1):
        coords = list(coords)
        coords[0] = float(self._map(coords[0], power))
        self._check(np.array([coords[0]]))
        return tuple(coords)

    def pullback(self, snap, power):
        if not isinstance(snap, WarpedMetric):
            raise PullbackUndefined("a grid map only acts on warped metrics")
        q = self._map(snap.rho, power)
        lo, hi = snap.rho[0], snap.rho[-1]
        if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
            raise PullbackUndefined("grid map sends grid nodes outside the grid")
        q = np.clip(q, lo, hi)
        a, _, _, _ = snap.chart_fields(np.column_stack([q, np.zeros_like(q)]))
        return WarpedMetric(snap.n, snap.rho, a[:, 0] * self.scale ** (2 * power), a[:, 1])


def _pull_fields(phi, fields_fn, pts, power):
    """Chart fields of ``(phi^power)^* g`` from those of ``g``."""
    q, J = phi.chart_map(pts, power)
    a, da, R, dR = fields_fn(q)
    J2 = J**2
    return a * J2, da * J2[None, :, None] * J[None, None, :], R, dR * J[None, :]


# ---------------------------------------------------------------------------
# breather data


@dataclass(frozen=True, eq=False)
class BreatherSpec:
    g0: BackwardFlow
    alpha: float
    phi: object
    C: float
    C_scalar: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise AlphaOutOfRange(f"shrinking breathers need alpha in (0, 1), got {self.alpha}")
        if self.g0.T < 1.0 - 1e-12:
            raise ConfigError("the breather flow must be defined on [0, 1]")

    @property
    def geometry(self):
        return self.g0.geometry


def make_breather_spec(g0, alpha, phi, *, samples=21, inflation=1.05):
    """Breather data with ``C`` the sampled sup of ``|Rm|`` over ``[0, 1]``, inflated.

    ``C_scalar`` is the same bound for ``|R|``; the reduced-distance certificate
    needs it because ``R`` is not bounded by ``|Rm|`` with constant one.
    """
    if g0.T < 1.0 - 1e-12:
        raise ConfigError("the breather flow must be defined on [0, 1]")
    taus = np.linspace(0.0, 1.0, samples)
    rm = max(g0.snapshot(t).rm_sup() for t in taus)
    rs = max(float(np.max(np.abs(g0.snapshot(t).scalar_curvature()))) for t in taus)
    return BreatherSpec(g0, float(alpha), phi, inflation * rm, inflation * rs)


def flat_breather(n=3, alpha=0.25, fixed_point=None, rotation=None):
    g0 = ClosedFormFlow(EuclideanSpace(n), 1.0)
    return make_breather_spec(g0, alpha, FlatDilation(alpha, fixed_point, rotation))


def sphere_breather(n=2, r0=1.0):
    alpha = r0**2 / (r0**2 + 2.0 * (n - 1))
    g0 = ClosedFormFlow(RoundSphere(n, r0), 1.0)
    return make_breather_spec(g0, alpha, Identity())


def cylinder_breather(n=3, r0=1.0, numeric=False, half_length=8.0, nodes=161, step=0.05):
    alpha = r0**2 / (r0**2 + 2.0 * (n - 2))
    if numeric:
        geometry = WarpedProduct.cylinder_profile(n, r0, half_length, nodes)
        g0 = evolve(geometry, 1.0, step)
        phi = GridMap(math.sqrt(alpha), 0.0, (float(geometry.grid[0]), float(geometry.grid[-1])))
    else:
        g0 = ClosedFormFlow(RoundCylinder(n, r0), 1.0)
        phi = CylinderMap(alpha)
    return make_breather_spec(g0, alpha, phi)


def _default_samples(geometry):
    if isinstance(geometry, EuclideanSpace):
        rng = np.random.default_rng(0)
        return rng.uniform(-3.0, 3.0, size=(16, geometry.n))
    if isinstance(geometry, RoundSphere):
        return np.linspace(0.1, 3.0, 16)[:, None]
    if isinstance(geometry, RoundCylinder):
        th, x = np.meshgrid(np.linspace(0.1, 3.0, 4), np.linspace(-4.0, 4.0, 9))
        return np.column_stack([th.ravel(), x.ravel()])
    rho = geometry.grid
    return np.column_stack([rho, np.full_like(rho, 0.5)])


@dataclass(frozen=True)
class BreatherReport:
    max_residual: float
    passed: bool
    tolerance: float


def verify_breather(spec: BreatherSpec, samples=None, tolerance=1e-10):
    """Sup over chart samples of the coefficient gap ``alpha g0(1) - phi^* g0(0)``."""
    g0 = spec.g0
    pts = _default_samples(spec.geometry) if samples is None else np.atleast_2d(samples)
    lhs = spec.alpha * g0.chart_fields(pts, np.ones(len(pts)))[0]
    rhs = _pull_fields(spec.phi, lambda q: g0.chart_fields(q, np.zeros(len(q))), pts, 1)[0]
    res = float(np.max(np.abs(lhs - rhs)))
    return BreatherReport(res, res <= tolerance, tolerance)


# ---------------------------------------------------------------------------
# ladder and ancient flow


@dataclass(frozen=True, eq=False)
class TauLadder:
    alpha: float
    i_max: int
    taus: np.ndarray
    C0: float

    def bounds(self):
        """``(alpha^{-i}, tau_i, C0 alpha^{-i})`` for every rung."""
        i = np.arange(self.i_max + 1)
        lo = self.alpha ** (-i.astype(float))
        return lo, self.taus, self.C0 * lo


def build_ladder(alpha, i_max, rtol=1e-12):
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    if int(i_max) != i_max or i_max < 0:
        raise ConfigError("i_max must be a nonnegative integer")
    powers = alpha ** (-np.arange(i_max + 1, dtype=float))
    taus = np.array([math.fsum(powers[: i + 1]) for i in range(i_max + 1)])
    ladder = TauLadder(float(alpha), int(i_max), taus, 1.0 / (1.0 - alpha))
    lo, mid, hi = ladder.bounds()
    if np.any(lo > mid * (1 + rtol)) or np.any(mid > hi * (1 + rtol)):
        raise ConfigError("time bound alpha^-i <= tau_i <= C0 alpha^-i violated")
    return ladder


class AncientFlow(BackwardFlow):
    """Concatenation of rescaled, pulled-back copies of ``g0`` along the ladder."""

    evolution = "ancient"

    def __init__(self, spec: BreatherSpec, ladder: TauLadder):
        self.spec = spec
        self.ladder = ladder
        self.geometry = spec.geometry
        self.T = float(ladder.taus[-1])
        self.B = spec.C * ladder.C0
        self.B_scalar = spec.C_scalar * ladder.C0

    def __repr__(self):
        return f"AncientFlow(alpha={self.spec.alpha}, i_max={self.ladder.i_max}, B={self.B:.6g})"

    def piece_index(self, tau):
        """Index ``i`` of the piece containing ``tau`` (junctions go to the left piece)."""
        return np.searchsorted(self.ladder.taus, np.asarray(tau, float) * (1 - 1e-15), side="left")

    def local_time(self, i, tau):
        i = np.asarray(i)
        taus = self.ladder.taus
        prev = np.where(i >= 1, taus[np.maximum(i - 1, 0)], 0.0)
        local = np.where(i >= 1, self.spec.alpha ** i.astype(float) * (tau - prev), tau)
        return np.clip(local, 0.0, 1.0)

    def piece_snapshot(self, i, tau):
        local = float(self.local_time(i, tau))
        snap = self.spec.phi.pullback(self.spec.g0.snapshot(local), i)
        return snap.scaled(self.spec.alpha ** (-i))

    def snapshot(self, tau):
        self.check_tau(tau)
        return self.piece_snapshot(int(self.piece_index(tau)), float(tau))

    def chart_fields(self, pts, taus):
        pts = np.atleast_2d(np.asarray(pts, float))
        taus = np.asarray(taus, float)
        self.check_tau(taus)
        idx = self.piece_index(taus)
        local = self.local_time(idx, taus)
        m, d = pts.shape
        a = np.empty((m, d))
        da = np.empty((m, d, d))
        R = np.empty(m)
        dR = np.empty((m, d))
        g0 = self.spec.g0
        alpha = self.spec.alpha
        for i in np.unique(idx):
            sel = idx == i
            lt = local[sel]
            ai, dai, Ri, dRi = _pull_fields(
                self.spec.phi, lambda q: g0.chart_fields(q, lt), pts[sel], int(i)
            )
            scale = alpha ** (-float(i))
            a[sel] = ai * scale
            da[sel] = dai * scale
            R[sel] = Ri / scale
            dR[sel] = dRi / scale
        return a, da, R, dR


def _rel(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.max(np.abs(x - y) / np.maximum(1.0, np.maximum(np.abs(x), np.abs(y)))))


def gluing_residuals(flow: AncientFlow):
    """Per junction ``tau_{i-1}``: relative value and tau-derivative mismatch.

    Derivatives are second-order one-sided differences taken inside each of
    the two adjacent pieces.
    """
    rows = []
    taus = flow.ladder.taus
    for i in range(1, flow.ladder.i_max + 1):
        t = taus[i - 1]
        left_len = 1.0 if i == 1 else taus[i - 1] - taus[i - 2]
        h = 1e-3 * min(left_len, taus[i] - taus[i - 1])

        def coef(j, tt):
            return flow.piece_snapshot(j, tt).coefficients()

        right, left = coef(i, t), coef(i - 1, t)
        d_right = (-3 * right + 4 * coef(i, t + h) - coef(i, t + 2 * h)) / (2 * h)
        d_left = (3 * left - 4 * coef(i - 1, t - h) + coef(i - 1, t - 2 * h)) / (2 * h)
        rows.append((i, float(t), _rel(right, left), _rel(d_right, d_left)))
    return rows


def build_ancient_flow(spec: BreatherSpec, i_max, gluing_tolerance=None):
    """Concatenate the breather into an ancient flow on ``[0, tau_{i_max}]``.

    Raises :class:`GluingFailure` naming the worst junction when a value or
    derivative mismatch exceeds ``gluing_tolerance`` (default ``1e-8`` for
    closed-form ``g0`` and ``1e-4`` for numeric ones).
    """
    if gluing_tolerance is None:
        gluing_tolerance = 1e-8 if spec.g0.evolution == "closed_form" else 1e-4
    flow = AncientFlow(spec, build_ladder(spec.alpha, i_max))
    rows = gluing_residuals(flow)
    flow.gluing = rows
    if rows:
        worst = max(rows, key=lambda r: max(r[2], r[3]))
        if max(worst[2], worst[3]) > gluing_tolerance:
            raise GluingFailure(
                f"junction {worst[0]} at tau={worst[1]:.6g} mismatches by {max(worst[2], worst[3]):.3g}",
                worst[0],
                max(worst[2], worst[3]),
            )
    return flow


@dataclass(frozen=True, eq=False)
class TypeIReport:
    B: float
    rows: list  # (tau, piece i, |Rm|, tau |Rm|, C alpha^i)
    passed: bool

    @property
    def max_value(self):
        return max((r[3] for r in self.rows), default=0.0)


def type_one_certificate(flow: AncientFlow, tau_samples=None, n_samples=200):
    """Check ``|Rm| <= C alpha^i`` on piece ``i`` and ``tau |Rm| <= B`` at the samples."""
    if tau_samples is None:
        tau_samples = np.geomspace(1.0, flow.T, n_samples)
    tau_samples = np.asarray(tau_samples, float)
    if np.any(tau_samples < 1.0) or np.any(tau_samples > flow.T * (1 + 1e-12)):
        raise ConfigError("Type I samples must lie in [1, tau_{i_max}]")
    C, alpha = flow.spec.C, flow.spec.alpha
    rows = []
    ok = True
    for tau in tau_samples:
        i = int(flow.piece_index(tau))
        rm = flow.snapshot(tau).rm_sup()
        piece_bound = C * alpha**i
        val = tau * rm
        ok &= rm <= piece_bound * (1 + 1e-12) and val <= flow.B * (1 + 1e-12)
        rows.append((float(tau), i, rm, val, piece_bound))
    return TypeIReport(flow.B, rows, bool(ok))


# ---------------------------------------------------------------------------
# base points and comparison curves


def base_point_sequence(spec: BreatherSpec, y, i_max):
    """``x_i = phi^{-(i+1)}(y)`` for ``i = 0..i_max`` in model coordinates."""
    geometry = spec.geometry
    geometry.validate_point(tuple(y))
    return [spec.phi.apply(geometry, tuple(y), -(i + 1)) for i in range(i_max + 1)]


def default_sigma(spec: BreatherSpec, y, segments=64):
    """Chart-straight curve from ``y`` to ``x_0``, linear in tau on ``[0, 1]``."""
    x0 = spec.phi.apply(spec.geometry, tuple(y), -1)
    b, t = spec.geometry.chart_pair(tuple(y), x0)
    return SpacetimeCurve.from_tau_path(lambda tau: b + tau * (t - b), 1.0, segments)


def _close(x, y, rtol=1e-12):
    return np.all(np.abs(x - y) <= rtol * np.maximum(1.0, np.maximum(np.abs(x), np.abs(y))))


def _pieces(spec, ladder, sigma, count):
    """Polylines ``(s, X)`` of ``sigma_j`` for ``j < count``, junctions verified."""
    if abs(sigma.tau1 - 1.0) > 1e-12:
        raise EndpointMismatch("sigma must be defined on tau in [0, 1]")
    if count > ladder.i_max:
        raise ConfigError(f"ladder depth {ladder.i_max} too small for {count} pieces")
    t_nodes = sigma.s**2
    pieces = []
    prev_end = sigma.coords[-1]
    for j in range(count):
        tau = ladder.taus[j] + ladder.alpha ** (-(j + 1)) * t_nodes
        X, _ = spec.phi.chart_map(sigma.coords, -(j + 1))
        if not _close(X[0], prev_end):
            raise EndpointMismatch(f"sigma_{j} does not start where the previous piece ends")
        X[0] = prev_end
        pieces.append((np.sqrt(tau), X))
        prev_end = X[-1]
    return pieces


def build_comparison_curves(spec: BreatherSpec, ladder: TauLadder, sigma: SpacetimeCurve, i_max=None):
    """The curves ``gamma_i`` on ``[0, tau_{i+1}]`` for ``i = 0..i_max-1``.

    ``gamma_i`` is ``sigma`` on ``[0, 1]`` followed by ``sigma_j(tau) =
    phi^{-(j+1)} sigma(alpha^{j+1} (tau - tau_j))`` on ``[tau_j, tau_{j+1}]``.
    """
    i_max = ladder.i_max if i_max is None else i_max
    pieces = _pieces(spec, ladder, sigma, i_max)
    curves = []
    s_parts, x_parts = [sigma.s], [sigma.coords]
    for s_j, X_j in pieces:
        s_parts.append(s_j[1:])
        x_parts.append(X_j[1:])
        curves.append(SpacetimeCurve(np.concatenate(s_parts), np.concatenate(x_parts)))
    return curves


@dataclass(frozen=True, eq=False)
class LBoundCertificate:
    sigma: SpacetimeCurve
    A: float
    D: float
    B: float
    B_scalar: float
    C0: float
    C1: float
    C2: float
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


@dataclass(frozen=True)
class CertificateRow:
    """Data for the point ``(x_i, tau_i)``; ``L_gamma`` is the comparison curve ending there."""

    i: int
    tau: float
    L_gamma: float
    L_majorant: float
    l_upper: float
    l_majorant: float
    l_num: float | None = None
    converged: bool = True


def l_bound_certificate(
    spec: BreatherSpec,
    flow: AncientFlow,
    y,
    sigma=None,
    i_max=None,
    compute_l_num=False,
    *,
    segments=64,
    opt_tolerance=1e-3,
    seed=0,
):
    """Uniform bound ``l(x_i, tau_i) <= C2`` through the comparison curves.

    With ``A = sup |d sigma/d tau|^2_{g0}``, ``D = L(sigma)`` and
    ``C1 = (2 B_R + A) sqrt(C0)``, where ``B_R`` bounds ``tau |R|``, each piece
    satisfies ``int sqrt(tau) (R + |sigma_j'|^2) <= C1 alpha^{-(j+1)/2}``, hence
    ``l(x_{i+1}, tau_{i+1}) <= D alpha^{(i+1)/2}/2 + C1/2 sum_{j<=i} alpha^{j/2} <= C2``
    with ``C2 = max(D, 0)/2 + C1 / (2 (1 - sqrt(alpha)))``.
    """
    ladder = flow.ladder
    i_max = ladder.i_max if i_max is None else i_max
    alpha = spec.alpha
    if sigma is None:
        sigma = default_sigma(spec, y, segments)
    vel_sq, _ = sigma.tau_velocity_sq(spec.g0)
    A = float(np.max(vel_sq))
    D = float(l_functional(spec.g0, sigma))
    C0 = ladder.C0
    C1 = (2.0 * flow.B_scalar + A) * math.sqrt(C0)
    C2 = max(D, 0.0) / 2.0 + C1 / (2.0 * (1.0 - math.sqrt(alpha)))
    pieces = _pieces(spec, ladder, sigma, i_max)
    integrals = [segment_integral(flow, s_j, X_j) for s_j, X_j in pieces]

    geometry = spec.geometry
    b, _ = geometry.chart_pair(tuple(y), tuple(y))
    xs = base_point_sequence(spec, y, i_max)
    curves = [sigma] + build_comparison_curves(spec, ladder, sigma, i_max)

    rows, failures = [], []
    slack = 1e-12
    for k in range(i_max + 1):
        tau_k = float(ladder.taus[k])
        L_gamma = D + math.fsum(integrals[:k])
        L_major = D + C1 * math.fsum(alpha ** (-(j + 1) / 2.0) for j in range(k))
        l_upper = L_gamma / (2.0 * math.sqrt(tau_k))
        if k == 0:
            l_major = D / 2.0
        else:
            l_major = 0.5 * D * alpha ** (k / 2.0) + 0.5 * C1 * math.fsum(
                alpha ** (j / 2.0) for j in range(k)
            )
        l_num, conv = None, True
        if compute_l_num:
            _, t = geometry.chart_pair(tuple(y), xs[k])
            res = reduced_distance_chart(flow, b, t, tau_k, seed=seed, s_nodes=curves[k].s)
            l_num, conv = res.value, res.converged
        row = CertificateRow(k, tau_k, L_gamma, L_major, l_upper, l_major, l_num, conv)
        rows.append(row)
        if L_gamma > L_major + slack * max(1.0, abs(L_major)):
            failures.append(f"i={k}: L(gamma)={L_gamma:.6g} exceeds majorant {L_major:.6g}")
        if l_upper > l_major + slack * max(1.0, l_major):
            failures.append(f"i={k}: l_upper={l_upper:.6g} exceeds {l_major:.6g}")
        if l_major > C2 * (1 + slack):
            failures.append(f"i={k}: chain value {l_major:.6g} exceeds C2={C2:.6g}")
        if l_num is not None:
            if l_num > l_upper + opt_tolerance:
                failures.append(f"i={k}: l_num={l_num:.6g} exceeds l_upper={l_upper:.6g}")
            if l_num > C2 + opt_tolerance:
                failures.append(f"i={k}: l_num={l_num:.6g} exceeds C2={C2:.6g}")
    return LBoundCertificate(sigma, A, D, flow.B, flow.B_scalar, C0, C1, C2, rows, failures)


# ---------------------------------------------------------------------------
# blow-down sequence


class RescaledFlow(BackwardFlow):
    """``tau_i^{-1} g(tau tau_i)`` for ``tau in [1, 1/alpha]``, based at ``(x_i, 1)``."""

    evolution = "rescaled"

    def __init__(self, parent: AncientFlow, i, base):
        self.parent = parent
        self.i = int(i)
        self.tau_i = float(parent.ladder.taus[i])
        self.base = tuple(base)
        self.geometry = parent.geometry
        self.T = 1.0 / parent.spec.alpha
        if self.tau_i * self.T > parent.T * (1 + 1e-12):
            raise ConfigError(f"ladder too short for rescaled index {i}")
        self.scale_factor = self.tau_i ** (-1) * parent.spec.alpha ** (-(self.i + 1))

    def snapshot(self, tau):
        self.check_tau(tau)
        return self.parent.snapshot(min(tau * self.tau_i, self.parent.T)).scaled(1.0 / self.tau_i)

    def chart_fields(self, pts, taus):
        taus = np.asarray(taus, float)
        self.check_tau(taus)
        a, da, R, dR = self.parent.chart_fields(pts, np.minimum(taus * self.tau_i, self.parent.T))
        k = 1.0 / self.tau_i
        return a * k, da * k, R / k, dR / k


def rescaled_sequence(flow: AncientFlow, xs, i_range):
    """Rescaled flows for ``i`` in ``i_range`` with the scale sanity check.

    Each entry records ``tau_i^{-1} alpha^{-(i+1)}``, which the ladder bound
    keeps inside ``[1/(alpha C0), 1/alpha]``.
    """
    alpha, C0 = flow.spec.alpha, flow.ladder.C0
    lo, hi = 1.0 / (alpha * C0), 1.0 / alpha
    out = []
    for i in i_range:
        rf = RescaledFlow(flow, i, xs[i])
        if not lo * (1 - 1e-12) <= rf.scale_factor <= hi * (1 + 1e-12):
            raise ConfigError(f"scale factor {rf.scale_factor} outside [{lo}, {hi}] at i={i}")
        out.append(rf)
    return out
