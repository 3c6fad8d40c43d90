"""Quasistatic deformation and auxeticity analysis of periodic tensegrity frameworks."""
from __future__ import annotations

__version__ = "0.1.0"

from .analysis import AuxeticityReport, analyze, poisson_ratio, transfer_operator  # noqa: E402
from .energy import ConstraintSystem, TetraContact, assemble  # noqa: E402
from .framework import Framework, Lattice, PeriodicGraph, Placement  # noqa: E402
from .pipeline import DeformationTrace, deform, equilibrate, tetrahedralize  # noqa: E402
from .scene import Scene, load_bundled, parse_scene  # noqa: E402

__all__ = [
    "AuxeticityReport",
    "ConstraintSystem",
    "DeformationTrace",
    "Framework",
    "Lattice",
    "PeriodicGraph",
    "Placement",
    "Scene",
    "TetraContact",
    "__version__",
    "analyze",
    "assemble",
    "deform",
    "equilibrate",
    "load_bundled",
    "parse_scene",
    "poisson_ratio",
    "tetrahedralize",
    "transfer_operator",
]
