"""Numerical toolkit for reduced distance, reduced volume and breather-built ancient flows.

Submodules
----------
geometry
    Model geometries, backward Ricci flows and curvature.
lgeometry
    L-functional, reduced distance, reduced volume, conjugate-heat residual.
breather
    Breather checks, ancient concatenation, Type I and reduced-distance certificates.
soliton
    Shrinker residuals, potential fits, F-functional and geometric probes.
kernels
    Hot loops, compiled when the extension is built and numpy otherwise.
"""
from .errors import *  # noqa: F401,F403
from .geometry import (  # noqa: F401
    ClosedFormFlow,
    CylinderMetric,
    EuclideanSpace,
    FlatMetric,
    NumericGridFlow,
    RoundCylinder,
    RoundSphere,
    SpacetimePoint,
    SphereMetric,
    WarpedMetric,
    WarpedProduct,
    evolve,
)
from .kernels import BACKEND  # noqa: F401

__version__ = "0.1.0"
