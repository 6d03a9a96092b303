"""The truncated energy I(u), its L2 gradient and the Nehari constraint.

    I(u) = 1/2 int |grad u|^2 - 1/2* int u+^2* - lam/2 int u+^2
           - mu/2 int u+^2 (log u+^2 - 1)

with ``u+ = max(u, 0)`` taken pointwise on grid values and ``0 log 0 := 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .constants import sq_log_sq
from .domain import Grid, check_dimension, check_field
from .errors import BracketError, InvalidFieldError, NoProjectionError

T_MIN, T_MAX = 1e-8, 1e8


@dataclass(frozen=True)
class Params:
    lam: float
    mu: float
    N: int

    def __post_init__(self):
        check_dimension(self.N)
        if not (math.isfinite(self.lam) and math.isfinite(self.mu)):
            raise InvalidFieldError("lam and mu must be finite")

    @property
    def two_star(self) -> float:
        return 2.0 * self.N / (self.N - 2)


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    critical: float
    quadratic: float
    logarithmic: float
    total: float


class FiberCoefficients(NamedTuple):
    """Integrals that determine ``t -> I(t u)`` completely."""

    dirichlet: float  # int |grad u|^2
    critical: float  # int u+^2*
    mass: float  # int u+^2
    entropy: float  # int u+^2 log u+^2


def _checked(grid: Grid, u) -> np.ndarray:
    u = check_field(grid, u)
    if not np.all(np.isfinite(u)):
        raise InvalidFieldError("field contains non-finite values")
    return u


def positive_part(u):
    return np.maximum(u, 0.0)


def fiber_coefficients(grid: Grid, u) -> FiberCoefficients:
    u = _checked(grid, u)
    up = positive_part(u)
    p_crit = 2.0 * grid.N / (grid.N - 2)
    c = grid.cell
    return FiberCoefficients(
        dirichlet=float(u @ (grid.matrix @ u)) * c,
        critical=float(np.sum(up**p_crit)) * c,
        mass=float(up @ up) * c,
        entropy=float(np.sum(sq_log_sq(up))) * c,
    )


def energy(grid: Grid, p: Params, u) -> EnergyBreakdown:
    k = fiber_coefficients(grid, u)
    dirichlet = 0.5 * k.dirichlet
    critical = k.critical / p.two_star
    quadratic = 0.5 * p.lam * k.mass
    logarithmic = 0.5 * p.mu * (k.entropy - k.mass)
    return EnergyBreakdown(
        dirichlet=dirichlet,
        critical=critical,
        quadratic=quadratic,
        logarithmic=logarithmic,
        total=dirichlet - critical - quadratic - logarithmic,
    )


def reaction(p: Params, u):
    """``u+^{2*-1} + lam u+ + mu u+ log u+^2`` (zero where u <= 0)."""
    up = positive_part(u)
    log_term = np.zeros_like(up)
    nz = up > 0
    log_term[nz] = up[nz] * np.log(up[nz] * up[nz])
    return up ** (p.two_star - 1.0) + p.lam * up + p.mu * log_term


def gradient(grid: Grid, p: Params, u) -> np.ndarray:
    """L2 Riesz representative of I'(u): ``L u - u+^{2*-1} - lam u+ - mu u+ log u+^2``."""
    u = _checked(grid, u)
    return grid.matrix @ u - reaction(p, u)


def nehari_g(grid: Grid, p: Params, u) -> float:
    """``g(u) = <I'(u), u>``."""
    k = fiber_coefficients(grid, u)
    return k.dirichlet - k.critical - p.lam * k.mass - p.mu * k.entropy


def fiber_energy(p: Params, k: FiberCoefficients, t):
    """``I(t u)`` from the fiber coefficients of ``u``."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    log_t2 = np.log(t2)
    return (
        0.5 * t2 * k.dirichlet
        - t ** p.two_star / p.two_star * k.critical
        - 0.5 * p.lam * t2 * k.mass
        - 0.5 * p.mu * t2 * (k.entropy + (log_t2 - 1.0) * k.mass)
    )


def fiber_slope(p: Params, k: FiberCoefficients, t):
    """``g(t u) / t^2``; its zeros are the critical points of ``t -> I(t u)``."""
    t = np.asarray(t, dtype=float)
    return (
        k.dirichlet
        - t ** (p.two_star - 2.0) * k.critical
        - p.lam * k.mass
        - p.mu * k.entropy
        - p.mu * np.log(t * t) * k.mass
    )


def fiber_roots(p: Params, k: FiberCoefficients, t_min=T_MIN, t_max=T_MAX, samples=801):
    """All sign changes of ``fiber_slope`` on a log grid, each refined by Brent's method."""
    ts = np.logspace(math.log10(t_min), math.log10(t_max), samples)
    vals = fiber_slope(p, k, ts)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0):
        a, b = ts[i], ts[i + 1]
        if vals[i] == 0.0:
            roots.append(float(a))
            continue
        if vals[i + 1] == 0.0:
            continue
        roots.append(optimize.brentq(lambda t: float(fiber_slope(p, k, t)), a, b, xtol=1e-300, rtol=1e-15))
    return sorted(set(roots))


def nehari_project(grid: Grid, p: Params, u, return_info: bool = False):
    """Scale factor ``t* > 0`` with ``g(t* u) = 0``.

    ``g(t u) / t^2`` is strictly decreasing when ``mu >= 0``, so the root is
    unique; for ``mu < 0`` there may be two and the largest (the fiber
    maximum) is returned with ``multiple_roots`` set in the info dict.
    """
    u = _checked(grid, u)
    if not np.any(u > 0):
        raise NoProjectionError("u+ vanishes identically; cannot project onto the Nehari set")
    k = fiber_coefficients(grid, u)
    roots = fiber_roots(p, k)
    if not roots:
        raise BracketError(f"no sign change of g(t u) for t in [{T_MIN:g}, {T_MAX:g}]")
    t = roots[-1]
    if return_info:
        return t, {"n_roots": len(roots), "roots": roots, "multiple_roots": len(roots) > 1}
    return t
