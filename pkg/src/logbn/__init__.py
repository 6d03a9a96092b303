"""Numerics for -Lap u = |u|^{2*-2} u + lam u + mu u log u^2 with Dirichlet data.

Modules: ``domain`` (grids, Laplacian, quadrature), ``constants`` (lambda_1,
Sobolev constant, log-Sobolev check), ``functional`` (energy, gradient,
Nehari constraint), ``solvers`` (mountain pass, Nehari flow), ``testfunctions``
(cutoff instantons and their integrals), ``regions`` (parameter-plane
classification) and ``cli``.
"""

__version__ = "0.1.0"

from .constants import SpectralPair, first_eigenpair, log_sobolev_check, sobolev_closed_form, sobolev_constant
from .domain import DomainSpec, Grid, build_grid, integrate, laplacian_apply, rho_max
from .errors import (
    AccuracyError,
    BracketError,
    ConvergenceError,
    LogBNError,
    RegimeError,
    UsageError,
)
from .functional import EnergyBreakdown, Params, energy, gradient, nehari_g, nehari_project
from .regions import DomainConstants, RegionClassifier, RegionVerdict, classify, curve_samples, f_min, nonexistence_predicate, phase_diagram
from .solvers import (
    GeometryEstimate,
    MountainPassSolver,
    MPConfig,
    MPResult,
    NehariGroundState,
    find_negative_endpoint,
    geometry_estimate,
    ground_state_search,
    mountain_pass_solve,
    positivity_check,
    residual_check,
)
from .testfunctions import CutoffSpec, asymptotics_report, instanton, sup_t_energy, test_function

__all__ = [
    "AccuracyError", "BracketError", "ConvergenceError", "CutoffSpec", "DomainConstants", "DomainSpec",
    "EnergyBreakdown", "GeometryEstimate", "Grid", "LogBNError", "MPConfig", "MPResult", "MountainPassSolver",
    "NehariGroundState", "Params", "RegimeError", "RegionClassifier", "RegionVerdict", "SpectralPair",
    "UsageError", "asymptotics_report", "build_grid", "classify", "curve_samples", "energy", "f_min",
    "find_negative_endpoint", "first_eigenpair", "geometry_estimate", "gradient", "ground_state_search",
    "instanton", "integrate", "laplacian_apply", "log_sobolev_check", "mountain_pass_solve", "nehari_g",
    "nehari_project", "nonexistence_predicate", "phase_diagram", "positivity_check", "residual_check",
    "rho_max", "sobolev_closed_form", "sobolev_constant", "sup_t_energy", "test_function",
]
