"""Entire curves with prescribed Ahlfors and Nevanlinna currents, built stage by stage."""

from .errors import (
    EntCurvesError,
    InfeasibleError,
    InvariantError,
    PoleError,
    RungeError,
    TermOverflowError,
)
from .geometry import Lattice, TargetCurrent, spectral_decompose
from .weierstrass import WeierstrassP, fs_cohomology
from .bumps import BumpFunction
from .polynomials import Polynomial, multi_disc_runge
from .quadrature import RegionMask, integrate_region
from .curves import ProductCurveExpr, TorusCurveExpr, curve_from_json
from .analysis import ShapeSpec, ahlfors_report, nevanlinna_report
from .builder import BuildConfig, Schedule, run_schedule, verify_run

__version__ = "0.1.0"

__all__ = [
    "EntCurvesError", "InfeasibleError", "InvariantError", "PoleError", "RungeError", "TermOverflowError",
    "Lattice", "TargetCurrent", "spectral_decompose", "WeierstrassP", "fs_cohomology", "BumpFunction",
    "Polynomial", "multi_disc_runge", "RegionMask", "integrate_region", "ProductCurveExpr",
    "TorusCurveExpr", "curve_from_json", "ShapeSpec", "ahlfors_report", "nevanlinna_report",
    "BuildConfig", "Schedule", "run_schedule", "verify_run",
]
