"""Batch runner: ``lgeom {flow,lgeo,breather,detect} run --config cfg.json --out dir``.

Exit codes: 0 every check passed, 1 configuration or domain error,
2 numerical non-convergence (flagged rows written), 3 a checked invariant
failed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import breather as bl
from . import io
from .errors import (
    BlowUp,
    ConfigError,
    DomainMismatch,
    GluingFailure,
    LGeomError,
    NoConvergence,
    NonSmoothPoint,
    OutOfDomain,
    PullbackUndefined,
    StepRejected,
    TailNotNegligible,
)
from .geometry import (
    EuclideanSpace,
    RoundCylinder,
    RoundSphere,
    SpacetimePoint,
    WarpedProduct,
    evolve,
    flow_residual,
    riemann_sup_norm,
)
from .lgeometry import conjugate_heat_residual, reduced_distance, reduced_volume
from .soliton import fit_potential, injectivity_floor

log = logging.getLogger("lgeom")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3
MODEL_KINDS = ("flat", "sphere", "cylinder", "warped_cylinder")


# ---------------------------------------------------------------------------
# configuration


def _from_dict(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    return cls(**data)


@dataclass
class ModelConfig:
    kind: str = "flat"
    n: int = 3
    r0: float = 1.0
    half_length: float = 8.0
    nodes: int = 161

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
        if self.kind != "flat" and self.n < 2:
            raise ConfigError("curved models need n >= 2")
        if not self.r0 > 0:
            raise ConfigError("model.r0 must be positive")

    def geometry(self):
        if self.kind == "flat":
            return EuclideanSpace(self.n)
        if self.kind == "sphere":
            return RoundSphere(self.n, self.r0)
        if self.kind == "cylinder":
            return RoundCylinder(self.n, self.r0)
        return WarpedProduct.cylinder_profile(self.n, self.r0, self.half_length, self.nodes)

    def lgeo_defaults(self):
        """Base point and targets away from the polar axis of the base."""
        n = self.n
        return {
            "flat": ([0.0] * n, [[r] + [0.0] * (n - 1) for r in (0.5, 1.0, 2.0)]),
            "sphere": ([0.0], [[0.5], [1.0]]),
            "cylinder": ([0.0, 0.0], [[0.5, 0.5], [1.0, 1.0]]),
            "warped_cylinder": ([0.0, 0.0], [[0.5, 0.5], [1.0, 1.0]]),
        }[self.kind]

    def default_point(self):
        return {
            "flat": [2.0] + [0.0] * (self.n - 1),
            "sphere": [0.0],
            "cylinder": [0.0, 1.0],
            "warped_cylinder": [0.0, 0.5],
        }[self.kind]


@dataclass
class Tolerances:
    flow: float = 1e-6
    gluing: float | None = None
    opt: float = 1e-3
    tail: float = 1e-6
    breather: float = 1e-10
    smooth: float = 1e-2
    heat: float = 1e-4
    monotone: float = 1e-5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is not None and not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance {f.name} must be positive")


@dataclass
class FlowSection:
    T: float = 1.0
    step: float = 0.05
    samples: int = 11


@dataclass
class LgeoSection:
    base: list | None = None
    targets: list | None = None
    taus: list = field(default_factory=lambda: [0.25, 1.0, 4.0])
    segments: int = 64
    restarts: int = 3


@dataclass
class BreatherSection:
    alpha: float | None = None
    y: list | None = None
    sigma: str = "tau_linear"
    l_num: bool = True
    type_one_samples: int = 200
    rescaled: bool = True

    def __post_init__(self):
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ConfigError(f"breather.alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma != "tau_linear":
            raise ConfigError("breather.sigma supports only 'tau_linear'")


@dataclass
class DetectSection:
    lam: float = 1.0
    degree: int = 4


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    flow: FlowSection = field(default_factory=FlowSection)
    lgeo: LgeoSection = field(default_factory=LgeoSection)
    breather: BreatherSection = field(default_factory=BreatherSection)
    detect: DetectSection = field(default_factory=DetectSection)
    i_max: int = 12
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        sections = {
            "model": ModelConfig,
            "tolerances": Tolerances,
            "flow": FlowSection,
            "lgeo": LgeoSection,
            "breather": BreatherSection,
            "detect": DetectSection,
        }
        unknown = sorted(set(data) - set(sections) - {"i_max", "seed"})
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            kwargs = {k: _from_dict(c, data.get(k), k) for k, c in sections.items()}
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls(**kwargs, i_max=data.get("i_max", 12), seed=data.get("seed", 0))
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.i_max, int) or self.i_max < 0:
            raise ConfigError("i_max must be a nonnegative integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")


def load_config(path, seed=None, i_max=None):
    try:
        data = json.loads(Path(path).read_text()) if path else {}
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    if seed is not None:
        data["seed"] = seed
    if i_max is not None:
        data["i_max"] = i_max
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# helpers


class Outcome:
    """Collects named checks and flagged rows; maps them to an exit code."""

    def __init__(self):
        self.checks = {}
        self.flagged = 0

    def check(self, name, ok):
        self.checks[name] = bool(ok)
        return ok

    @property
    def code(self):
        if not all(self.checks.values()):
            return EXIT_INVARIANT
        return EXIT_NUMERIC if self.flagged else EXIT_OK

    def summary(self):
        return {"checks": self.checks, "flagged_rows": self.flagged}


def _point(geometry, params):
    try:
        return geometry.point(*params)
    except TypeError as exc:
        raise ConfigError(f"bad point parameters {params}: {exc}") from exc


def _emit(name, value):
    print(f"{name}: {io.fmt(value)}")


def _make_spec(cfg):
    m = cfg.model
    alpha = cfg.breather.alpha
    if m.kind == "flat":
        return bl.flat_breather(m.n, 0.25 if alpha is None else alpha)
    if m.kind == "sphere":
        spec = bl.sphere_breather(m.n, m.r0)
    else:
        spec = bl.cylinder_breather(m.n, m.r0, numeric=m.kind == "warped_cylinder", half_length=m.half_length, nodes=m.nodes)
    if alpha is not None and alpha != spec.alpha:
        phi = spec.phi
        if isinstance(phi, bl.CylinderMap):
            phi = bl.CylinderMap(alpha)
        elif isinstance(phi, bl.GridMap):
            phi = bl.GridMap(math.sqrt(alpha), phi.center, phi.grid)
        spec = bl.BreatherSpec(spec.g0, alpha, phi, spec.C, spec.C_scalar)
    return spec


# ---------------------------------------------------------------------------
# subcommands


def run_flow(cfg, out):
    geometry = cfg.model.geometry()
    fc = cfg.flow
    flow = evolve(geometry, fc.T, fc.step, flow_tolerance=cfg.tolerances.flow)
    taus = np.linspace(0.0, fc.T, fc.samples)
    rows = []
    for tau in taus:
        lo, hi = max(tau - 1e-3 * fc.T, 0.0), min(tau + 1e-3 * fc.T, fc.T)
        mid = 0.5 * (lo + hi)
        rows.append([tau, riemann_sup_norm(flow, tau), flow_residual(flow, [mid], h=0.5 * (hi - lo))])
    io.write_csv(out / "flow.csv", "flow", ["tau", "sup_rm", "flow_residual"], rows)
    if isinstance(geometry, WarpedProduct):
        io.write_profile(out / "profile_T.csv", flow.snapshot(fc.T))
    res = max(r[2] for r in rows)
    outcome = Outcome()
    outcome.check("flow_residual", res <= max(cfg.tolerances.flow, 1e-6))
    _emit("max_flow_residual", res)
    return outcome


def run_lgeo(cfg, out):
    geometry = cfg.model.geometry()
    lc = cfg.lgeo
    taus = sorted(float(t) for t in lc.taus)
    if not taus or taus[0] <= 0:
        raise ConfigError("lgeo.taus must be positive")
    flow = evolve(geometry, 1.01 * taus[-1], cfg.flow.step, flow_tolerance=cfg.tolerances.flow)
    default_base, default_targets = cfg.model.lgeo_defaults()
    base = _point(geometry, lc.base if lc.base is not None else default_base)
    targets = lc.targets if lc.targets is not None else default_targets
    pts = [_point(geometry, t) for t in targets]
    outcome = Outcome()
    vols = []
    for tau in taus:
        try:
            v = reduced_volume(flow, base, tau, tail_tolerance=cfg.tolerances.tail, seed=cfg.seed)
        except TailNotNegligible as exc:
            log.warning("reduced volume at tau=%g: %s", tau, exc)
            outcome.flagged += 1
            continue
        vols.append(v)
        outcome.flagged += int(v.flagged)
    io.write_volume_table(out / "reduced_volume.csv", vols)
    vmap = {v.tau: v.value for v in vols}
    values = [v.value for v in vols]
    outcome.check(
        "volume_monotone",
        all(b <= a + cfg.tolerances.monotone for a, b in zip(values, values[1:])),
    )
    rows = []
    curve_rows = []
    for k, p in enumerate(pts):
        for tau in taus:
            res = reduced_distance(flow, base, p, tau, segments=lc.segments, restarts=lc.restarts, seed=cfg.seed)
            heat = None
            try:
                heat = conjugate_heat_residual(
                    flow, base, SpacetimePoint(p, tau), segments=lc.segments, smooth_tol=cfg.tolerances.smooth
                )
            except (NonSmoothPoint, NoConvergence, DomainMismatch) as exc:
                log.info("conjugate-heat residual skipped at target %d, tau=%g: %s", k, tau, exc)
            flagged = not res.converged or heat is None
            outcome.flagged += int(flagged)
            rows.append([k, tau, res.value, vmap.get(tau), heat, not flagged])
            curve_rows.extend([k, tau, s, *x] for s, x in zip(res.curve.s, res.curve.coords))
    io.write_csv(out / "lgeo.csv", "lgeo", ["target", "tau", "l", "V", "heat_residual", "converged"], rows)
    d = geometry.chart_dim
    io.write_csv(out / "curves.csv", "curves", ["target", "tau", "s"] + [f"x{j}" for j in range(d)], curve_rows)
    heats = [r[4] for r in rows if r[4] is not None]
    outcome.check("heat_subsolution", all(h <= cfg.tolerances.heat for h in heats))
    for v in vols:
        _emit(f"V(tau={io.fmt(v.tau)})", v.value)
    return outcome


def _breather_pipeline(cfg, out, *, depth):
    spec = _make_spec(cfg)
    geometry = spec.geometry
    y = _point(geometry, cfg.breather.y if cfg.breather.y is not None else cfg.model.default_point())
    outcome = Outcome()
    rep = bl.verify_breather(spec, tolerance=cfg.tolerances.breather if spec.g0.evolution == "closed_form" else 1e-4)
    outcome.check("breather_condition", rep.passed)
    flow = bl.build_ancient_flow(spec, depth, cfg.tolerances.gluing)
    return spec, y, flow, rep, outcome


def run_breather(cfg, out):
    i_max = cfg.i_max
    spec, y, flow, rep, outcome = _breather_pipeline(cfg, out, depth=max(i_max, 1))
    ladder = flow.ladder
    lo, mid, hi = ladder.bounds()
    io.write_csv(
        out / "ladder.csv",
        "ladder",
        ["i", "tau_i", "alpha_pow", "C0_alpha_pow"],
        ([i, mid[i], lo[i], hi[i]] for i in range(ladder.i_max + 1)),
    )
    io.write_csv(out / "gluing.csv", "gluing", ["junction", "tau", "value_residual", "derivative_residual"], flow.gluing)
    outcome.check("time_bound", bool(np.all(lo <= mid * (1 + 1e-12)) and np.all(mid <= hi * (1 + 1e-12))))

    t1 = bl.type_one_certificate(flow, n_samples=cfg.breather.type_one_samples)
    io.write_csv(out / "type_one.csv", "type_one", ["tau", "piece", "rm", "tau_rm", "piece_bound"], t1.rows)
    outcome.check("type_one", t1.passed)

    cert = bl.l_bound_certificate(
        spec, flow, y, i_max=i_max, compute_l_num=cfg.breather.l_num, opt_tolerance=cfg.tolerances.opt, seed=cfg.seed
    )
    io.write_certificate(out / "certificate.csv", cert)
    outcome.flagged += sum(not r.converged for r in cert.rows)
    outcome.check("l_bound", cert.passed)

    report = {
        "alpha": spec.alpha,
        "C": spec.C,
        "C_scalar": spec.C_scalar,
        "C0": ladder.C0,
        "B": flow.B,
        "breather_residual": rep.max_residual,
        "type_one_max": t1.max_value,
        "A": cert.A,
        "D": cert.D,
        "C1": cert.C1,
        "C2": cert.C2,
        "certificate_failures": cert.failures,
    }
    if cfg.breather.rescaled and i_max >= 1:
        xs = bl.base_point_sequence(spec, y, i_max)
        seq = bl.rescaled_sequence(flow, xs, range(i_max))
        rows = []
        for rf in seq:
            fit = fit_potential(rf.snapshot(1.0), cfg.detect.lam, degree=cfg.detect.degree)
            rows.append([rf.i, rf.scale_factor, fit.sup, fit.l2])
        io.write_csv(out / "rescaled.csv", "rescaled", ["i", "scale_factor", "residual_sup", "residual_l2"], rows)
        delta, _ = injectivity_floor(seq)
        report["injectivity_delta"] = delta
        outcome.check("injectivity_floor", delta > 0)
    report.update(outcome.summary())
    io.write_json(out / "summary.json", report)
    for key in ("alpha", "B", "C2", "type_one_max"):
        _emit(key, report[key])
    if cert.rows and cert.rows[-1].l_num is not None:
        _emit(f"l_num(i={cert.rows[-1].i})", cert.rows[-1].l_num)
    return outcome


def run_detect(cfg, out):
    i_max = cfg.i_max
    spec, y, flow, _, outcome = _breather_pipeline(cfg, out, depth=i_max + 1)
    xs = bl.base_point_sequence(spec, y, i_max)
    seq = bl.rescaled_sequence(flow, xs, range(i_max + 1))
    rows = []
    sups = []
    for rf in seq:
        fit = fit_potential(rf.snapshot(1.0), cfg.detect.lam, degree=cfg.detect.degree)
        sups.append(fit.sup)
        rows.append([rf.i, rf.tau_i, fit.sup, fit.l2, *fit.coefficients[1:]])
        io.write_soliton(out / f"soliton_{rf.i:03d}.csv", fit)
    cols = ["i", "tau_i", "residual_sup", "residual_l2"] + [f"a{k}" for k in range(1, cfg.detect.degree + 1)]
    io.write_csv(out / "detect.csv", "detect", cols, rows)
    outcome.check("residual_nonincreasing", all(b <= a + 1e-12 for a, b in zip(sups, sups[1:])))
    delta, _ = injectivity_floor(seq)
    io.write_json(out / "summary.json", {"residual_sup": sups, "injectivity_delta": delta, **outcome.summary()})
    _emit("final_residual", sups[-1])
    _emit("injectivity_delta", delta)
    return outcome


COMMANDS = {"flow": run_flow, "lgeo": run_lgeo, "breather": run_breather, "detect": run_detect}


def build_parser():
    parser = argparse.ArgumentParser(prog="lgeom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"{name} experiments")
        actions = p.add_subparsers(dest="action", required=True)
        run = actions.add_parser("run", help=f"run the {name} pipeline")
        run.add_argument("--config", type=Path, default=None, help="JSON experiment configuration")
        run.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        run.add_argument("--seed", type=int, default=None, help="seed for minimizer restarts")
        run.add_argument("--i-max", dest="i_max", type=int, default=None, help="ladder depth")
    return parser


def _configure_logging():
    level = os.environ.get("LGEOM_LOG", "WARNING").upper()
    if level.isdigit():
        level = int(level)
    elif level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.i_max)
        out = args.out / args.command
        out.mkdir(parents=True, exist_ok=True)
        outcome = COMMANDS[args.command](cfg, out)
    except (ConfigError, OutOfDomain, DomainMismatch, PullbackUndefined) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, StepRejected, BlowUp, TailNotNegligible) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GluingFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except LGeomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, ok in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return outcome.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
