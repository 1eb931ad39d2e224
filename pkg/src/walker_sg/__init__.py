"""Stochastic-geometry model of Walker-delta satellite constellations.

Exact satellite placement from two random offsets, torus dynamics of the
offsets, quadrature of nearest-satellite distance, interference and
coverage statistics, and an independent Monte Carlo oracle.
"""

from walker_sg.geometry import (
    ConstellationSpec,
    OffsetPair,
    SatelliteSet,
    UserGeometry,
    snapshot,
)
from walker_sg.link import (
    DeterministicFading,
    FadingModel,
    LinkBudget,
    RayleighFading,
    rayleigh_fading,
)
from walker_sg.dynamics import AngularSpeeds, RegimeClassification, classify, offsets_at
from walker_sg.analysis import CoverageQuery, QuadratureGrid
from walker_sg.montecarlo import EnsembleConfig

__version__ = "0.1.0"

__all__ = [
    "AngularSpeeds",
    "ConstellationSpec",
    "CoverageQuery",
    "DeterministicFading",
    "EnsembleConfig",
    "FadingModel",
    "LinkBudget",
    "OffsetPair",
    "QuadratureGrid",
    "RayleighFading",
    "RegimeClassification",
    "SatelliteSet",
    "UserGeometry",
    "classify",
    "offsets_at",
    "rayleigh_fading",
    "snapshot",
]
