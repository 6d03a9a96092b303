"""Cutoff instantons ``U_eps = phi * u_eps`` and their integrals.

Two evaluation paths exist. ``test_function`` samples U_eps on a solver grid.
``radial_integrals`` computes the four fiber integrals on R^N by adaptive
1-d quadrature, which is what the small-eps expansions need: grid quadrature
cannot resolve a bubble of width eps < 4h.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import integrate as spint
from scipy import optimize

from .constants import sobolev_closed_form
from .domain import Grid, check_dimension
from .errors import BracketError, NoProjectionError, ResolutionError, UsageError
from .functional import FiberCoefficients, Params, fiber_coefficients, fiber_energy
from .radial import (
    geometric_breaks,
    instanton,
    instanton_dr,
    instanton_log_sq,
    shell_integral,
    sphere_area,
)

PROFILES = ("generic", "radial_N4", "radial_N3")

__all__ = [
    "AsymptoticsReport",
    "CutoffSpec",
    "asymptotics_report",
    "cutoff",
    "cutoff_dr",
    "fiber_max",
    "instanton",
    "radial_integrals",
    "sup_t_energy",
    "sup_t_energy_radial",
    "test_function",
    "threshold_sweep",
]


def default_profile(N: int) -> str:
    return {3: "radial_N3", 4: "radial_N4"}.get(check_dimension(N), "generic")


@dataclass(frozen=True)
class CutoffSpec:
    """Plateau radius ``rho`` (phi = 1 on [0, rho], 0 beyond 2 rho) and centre.

    ``center=None`` means the geometric centre of whatever grid the cutoff is
    placed on.
    """

    rho: float
    profile: str = "generic"
    center: Optional[tuple] = None

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise UsageError("rho must be positive", field="rho")
        if self.profile not in PROFILES:
            raise UsageError(f"profile must be one of {PROFILES}", field="profile")
        if self.profile == "radial_N3" and not 4 * self.rho**2 < 1:
            raise UsageError("the N=3 cutoff needs 4 rho^2 < 1", field="rho")
        if self.profile == "radial_N4" and self.rho > 1:
            raise UsageError("the N=4 cutoff needs rho <= 1", field="rho")

    @classmethod
    def for_dimension(cls, N, rho, center=None) -> "CutoffSpec":
        return cls(rho=rho, profile=default_profile(N), center=center)

    def log_condition(self, lam: float, mu: float) -> float:
        """``log(1 / (8 e^{3 - lam/mu} rho^2)) - 1``; positive when the sharper N=4 setting applies."""
        return -math.log(8.0) - (3.0 - lam / mu) - 2.0 * math.log(self.rho) - 1.0

    def fits_in(self, grid: Grid) -> bool:
        """True iff every non-interior node lies at distance >= 2 rho from the centre."""
        c = self._center_on(grid)
        outside = np.argwhere(~grid.mask).astype(float) * grid.h + grid.origin
        d = np.sqrt(np.sum((outside - c) ** 2, axis=1)).min()
        return bool(d >= 2.0 * self.rho * (1.0 - 1e-12))

    def _center_on(self, grid: Grid) -> np.ndarray:
        return grid.center() if self.center is None else np.asarray(self.center, dtype=float)


# -- cutoff profile: quintic smoothstep down from 1 at rho to 0 at 2 rho ----------


def cutoff(rho, r):
    r = np.asarray(r, dtype=float)
    s = np.clip((r - rho) / rho, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def cutoff_dr(rho, r):
    r = np.asarray(r, dtype=float)
    s = np.clip((r - rho) / rho, 0.0, 1.0)
    return -30.0 * s * s * (1.0 - s) ** 2 / rho


def cutoff_sq_integral(rho) -> float:
    """``int_0^{2 rho} phi^2 dr``."""
    return spint.quad(lambda r: float(cutoff(rho, r)) ** 2, 0.0, 2.0 * rho, points=[rho], epsabs=0.0, epsrel=1e-13)[0]


def cutoff_slope_integral(rho) -> float:
    """``int_rho^{2 rho} phi'^2 dr``."""
    return spint.quad(lambda r: float(cutoff_dr(rho, r)) ** 2, rho, 2.0 * rho, epsabs=0.0, epsrel=1e-13)[0]


# -- grid sampling -----------------------------------------------------------------


def test_function(grid: Grid, cut: CutoffSpec, eps: float) -> np.ndarray:
    """Sample ``phi(|x - c|) u_eps(|x - c|)`` on the interior points of ``grid``."""
    if not eps > 0:
        raise UsageError("eps must be positive", field="eps")
    if eps < 4.0 * grid.h:
        raise ResolutionError(f"eps={eps:g} is below 4h={4 * grid.h:g}; the bubble peak is not resolved")
    if not cut.fits_in(grid):
        raise UsageError(f"ball of radius 2 rho = {2 * cut.rho:g} does not fit in the domain", field="rho")
    c = cut._center_on(grid)
    r = np.sqrt(np.sum((grid.coordinates() - c) ** 2, axis=1))
    return cutoff(cut.rho, r) * instanton(grid.N, eps, r)


test_function.__test__ = False  # not a pytest test despite the name


# -- radial integrals ----------------------------------------------------------------


@dataclass(frozen=True)
class RadialIntegrals:
    eps: float
    dirichlet: float
    critical: float
    mass: float
    entropy: float
    gradient_excess: float  # int |grad U|^2 - S^{N/2}

    def fiber(self) -> FiberCoefficients:
        return FiberCoefficients(self.dirichlet, self.critical, self.mass, self.entropy)


def radial_integrals(cut: CutoffSpec, N: int, eps: float, rtol: float = 1e-12) -> RadialIntegrals:
    """The four fiber integrals of U_eps over R^N.

    The Dirichlet and critical integrals are assembled as the whole-space
    value ``S^{N/2}`` plus a correction integrated only where phi < 1, which
    keeps the O(eps^{N-2}) excess free of cancellation.
    """
    N = check_dimension(N)
    if not eps > 0:
        raise UsageError("eps must be positive", field="eps")
    rho = cut.rho
    p = 2.0 * N / (N - 2)
    full = sobolev_closed_form(N) ** (N / 2)
    inner = geometric_breaks(0.0, rho, eps * 1e-2) + [1.5 * rho, 2.0 * rho]
    shell = [rho, 1.25 * rho, 1.5 * rho, 1.75 * rho, 2.0 * rho]

    def grad_gain(r):
        u, du = instanton(N, eps, r), instanton_dr(N, eps, r)
        phi, dphi = cutoff(rho, r), cutoff_dr(rho, r)
        return (dphi * u + phi * du) ** 2 - du * du

    tail = spint.quad(lambda r: instanton_dr(N, eps, r) ** 2 * r ** (N - 1), 2.0 * rho, math.inf,
                      epsabs=0.0, epsrel=rtol, limit=200)[0]
    excess = shell_integral(N, grad_gain, shell, rtol) - sphere_area(N) * tail

    crit_tail = spint.quad(lambda r: instanton(N, eps, r) ** p * r ** (N - 1), 2.0 * rho, math.inf,
                           epsabs=0.0, epsrel=rtol, limit=200)[0]
    crit_loss = shell_integral(N, lambda r: (1.0 - cutoff(rho, r) ** p) * instanton(N, eps, r) ** p, shell, rtol)
    crit_loss += sphere_area(N) * crit_tail

    def sq(r):
        return (cutoff(rho, r) * instanton(N, eps, r)) ** 2

    def ent(r):
        phi = cutoff(rho, r)
        if phi <= 0.0:
            return 0.0
        return (phi * instanton(N, eps, r)) ** 2 * (instanton_log_sq(N, eps, r) + 2.0 * math.log(phi))

    mass = shell_integral(N, sq, inner, rtol)
    entropy = shell_integral(N, ent, inner, rtol)
    return RadialIntegrals(
        eps=float(eps),
        dirichlet=full + excess,
        critical=full - crit_loss,
        mass=mass,
        entropy=entropy,
        gradient_excess=excess,
    )


# -- fiber maximum -------------------------------------------------------------------


def fiber_max(p: Params, k: FiberCoefficients, t_min=1e-8, t_max=1e8, samples=801):
    """Maximise ``h(t) = I(t U)`` over t > 0.

    A log-spaced scan locates the largest sample; golden-section search on
    ``log t`` refines it inside the bracket formed by its two neighbours.
    """
    if not k.critical > 0:
        raise NoProjectionError("U+ vanishes identically")
    s = np.linspace(math.log(t_min), math.log(t_max), samples)
    vals = fiber_energy(p, k, np.exp(s))
    i = int(np.nanargmax(vals))
    if i == 0 or i == samples - 1:
        raise BracketError(f"I(tU) has no interior maximum on [{t_min:g}, {t_max:g}]")
    f = lambda x: -float(fiber_energy(p, k, math.exp(x)))
    r = optimize.minimize_scalar(f, bracket=(s[i - 1], s[i], s[i + 1]), method="golden", tol=1e-12)
    x = r.x if -r.fun >= vals[i] else s[i]
    return math.exp(x), float(fiber_energy(p, k, math.exp(x)))


def sup_t_energy(grid: Grid, p: Params, U):
    """``(t*, sup_t I(t U))`` for a grid field U."""
    return fiber_max(p, fiber_coefficients(grid, U))


def threshold_gap(p: Params, r: RadialIntegrals, s):
    """``(1/N) S^{N/2} - I(e^s U)`` written without cancelling the leading terms.

    With ``A = S^{N/2} + a`` and ``B = S^{N/2} - b`` the identity
    ``1/N - t^2/2 + t^{2*}/2* = expm1(2* s)/2* - expm1(2 s)/2`` leaves only
    O(eps)-sized quantities to subtract.
    """
    full = sobolev_closed_form(p.N) ** (p.N / 2)
    q = p.two_star
    t2 = math.exp(2.0 * s)
    b = full - r.critical
    base = full * (math.expm1(q * s) / q - math.expm1(2.0 * s) / 2.0)
    return (
        base
        - 0.5 * t2 * r.gradient_excess
        - math.exp(q * s) / q * b
        + 0.5 * p.lam * t2 * r.mass
        + 0.5 * p.mu * t2 * (r.entropy + (2.0 * s - 1.0) * r.mass)
    )


def sup_t_energy_radial(p: Params, cut: CutoffSpec, eps: float):
    """``(t*, level, margin)`` with the integrals taken by radial quadrature.

    ``margin = (1/N) S^{N/2} - sup_t I(t U_eps)``, evaluated directly so that
    margins far below the level's rounding error stay meaningful.
    """
    r = radial_integrals(cut, p.N, eps)
    t, level = fiber_max(p, r.fiber())
    s0 = math.log(t)
    width = max(1e-3, 10.0 * abs(s0))
    res = optimize.minimize_scalar(lambda s: threshold_gap(p, r, s), bounds=(s0 - width, s0 + width),
                                   method="bounded", options={"xatol": 1e-14})
    s = res.x if res.fun <= threshold_gap(p, r, s0) else s0
    return math.exp(s), level, float(threshold_gap(p, r, s))


def margin_scale(N, eps):
    """Order of the expected threshold margin: ``eps log(1/eps)`` for N = 3, ``eps^2 log(1/eps)`` above."""
    eps = np.asarray(eps, dtype=float)
    return (eps if N == 3 else eps**2) * np.log(1.0 / eps)


@dataclass
class ThresholdSweep:
    eps_list: np.ndarray
    t_star: np.ndarray
    level: np.ndarray
    margin: np.ndarray
    scaled_margin: np.ndarray

    @property
    def below_threshold(self) -> bool:
        return bool(np.all(self.margin > 0))

    @property
    def margin_shrinks_with_eps(self) -> bool:
        """Raw margin strictly decreasing along the decreasing eps list."""
        return bool(np.all(np.diff(self.margin) < 0))

    @property
    def scaled_margin_grows(self) -> bool:
        """Margin over its expected order strictly increasing as eps decreases."""
        return bool(np.all(np.diff(self.scaled_margin) > 0))


def threshold_sweep(p: Params, cut: CutoffSpec, eps_list) -> ThresholdSweep:
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 2 or np.any(np.diff(eps) >= 0):
        raise UsageError("eps_list must be strictly decreasing", field="eps_list")
    out = np.array([sup_t_energy_radial(p, cut, e) for e in eps])
    return ThresholdSweep(
        eps_list=eps,
        t_star=out[:, 0],
        level=out[:, 1],
        margin=out[:, 2],
        scaled_margin=out[:, 2] / margin_scale(p.N, eps),
    )


# -- asymptotics report --------------------------------------------------------------


def _limit_fit(eps, ratio):
    """Fit ``ratio = a + b / log(1/eps)``; returns (a, b, max abs residual)."""
    x = 1.0 / np.log(1.0 / np.asarray(eps))
    coef, *_ = np.linalg.lstsq(np.vstack([np.ones_like(x), x]).T, ratio, rcond=None)
    resid = ratio - (coef[0] + coef[1] * x)
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(resid)))


@dataclass
class AsymptoticsReport:
    N: int
    rho: float
    eps_list: np.ndarray
    gradient: np.ndarray
    critical: np.ndarray
    mass: np.ndarray
    entropy: np.ndarray
    gradient_excess: np.ndarray
    fits: Dict[str, float] = field(default_factory=dict)
    passes: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    def rows(self):
        for i, e in enumerate(self.eps_list):
            yield {
                "eps": float(e),
                "grad_sq": float(self.gradient[i]),
                "critical": float(self.critical[i]),
                "mass": float(self.mass[i]),
                "entropy": float(self.entropy[i]),
                "gradient_excess": float(self.gradient_excess[i]),
            }

    def to_csv(self, path) -> None:
        """One row per eps; fitted quantities and pass flags repeat on every row."""
        extra = {f"fit_{k}": v for k, v in sorted(self.fits.items())}
        extra.update({f"pass_{k}": int(v) for k, v in sorted(self.passes.items())})
        rows = [dict(r, N=self.N, rho=self.rho, **extra) for r in self.rows()]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})

    @classmethod
    def from_csv(cls, path) -> "AsymptoticsReport":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise UsageError(f"{path} holds no rows", field="path")
        col = lambda k: np.array([float(r[k]) for r in rows])
        first = rows[0]
        return cls(
            N=int(first["N"]),
            rho=float(first["rho"]),
            eps_list=col("eps"),
            gradient=col("grad_sq"),
            critical=col("critical"),
            mass=col("mass"),
            entropy=col("entropy"),
            gradient_excess=col("gradient_excess"),
            fits={k[4:]: float(v) for k, v in first.items() if k.startswith("fit_")},
            passes={k[5:]: bool(int(v)) for k, v in first.items() if k.startswith("pass_")},
        )


def asymptotics_report(cut: CutoffSpec, N: int, eps_list: Sequence[float], tol: Optional[float] = None) -> AsymptoticsReport:
    """Integrals of U_eps along a decreasing eps sweep with fitted small-eps coefficients.

    Fits, by dimension:

    * N >= 4: slope of ``log(int |grad U|^2 - S^{N/2})`` against ``log eps`` (expect N - 2).
    * N = 3: ``(int |grad U|^2 - S^{3/2}) / eps`` (expect ``sqrt3 w3 int phi'^2``).
    * N >= 5: ``int U^2 log U^2 / (eps^2 log(1/eps))``, extrapolated; positive.
    * N = 4: ``int U^2 / (eps^2 log(1/eps))`` extrapolated (expect ``8 w4``); the entropy
      ratio checked between the bracket constants at every eps <= 0.05.
    * N = 3: ``int U^2 / eps`` and ``int U^2 log U^2 / (eps log eps)`` (expect ``sqrt3 w3 int phi^2``).

    Ratios that converge like ``1/log(1/eps)`` are extrapolated with a two-term
    fit rather than read off at the smallest eps. Failures set pass flags;
    nothing raises.
    """
    N = check_dimension(N)
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 3 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise UsageError("eps_list needs at least 3 strictly decreasing positive values", field="eps_list")
    if eps[0] / eps[-1] < 4:
        raise UsageError("eps_list must span a factor of at least 4", field="eps_list")
    ints = [radial_integrals(cut, N, e) for e in eps]
    rep = AsymptoticsReport(
        N=N,
        rho=cut.rho,
        eps_list=eps,
        gradient=np.array([r.dirichlet for r in ints]),
        critical=np.array([r.critical for r in ints]),
        mass=np.array([r.mass for r in ints]),
        entropy=np.array([r.entropy for r in ints]),
        gradient_excess=np.array([r.gradient_excess for r in ints]),
    )
    w = sphere_area(N)
    fits, passes = rep.fits, rep.passes
    passes["finite"] = bool(all(np.all(np.isfinite(a)) for a in (rep.gradient, rep.critical, rep.mass, rep.entropy)))
    if N >= 4:
        tol_slope = 0.2 if tol is None else tol
        ok = rep.gradient_excess > 0
        if ok.sum() >= 2:
            slope = float(np.polyfit(np.log(eps[ok]), np.log(rep.gradient_excess[ok]), 1)[0])
        else:
            slope = float("nan")
        fits["gradient_excess_slope"] = slope
        passes["gradient_excess_slope"] = bool(ok.all() and abs(slope - (N - 2)) <= tol_slope)
    else:
        target = math.sqrt(3.0) * w * cutoff_slope_integral(cut.rho)
        coef = rep.gradient_excess / eps
        fits["gradient_excess_linear"] = float(coef[-1])
        fits["gradient_excess_linear_expected"] = target
        passes["gradient_excess_linear"] = bool(abs(coef[-1] / target - 1) <= (0.05 if tol is None else tol))
    if N >= 5:
        ratio = rep.entropy / (eps**2 * np.log(1.0 / eps))
        a, b, resid = _limit_fit(eps, ratio)
        fits["entropy_log_coefficient"] = a
        fits["entropy_log_fit_residual"] = resid
        passes["entropy_log_coefficient"] = bool(a > 0 and resid <= 1e-2 * abs(a))
    elif N == 4:
        rel = 0.10 if tol is None else tol
        ratio = rep.mass / (eps**2 * np.log(1.0 / eps))
        a, b, resid = _limit_fit(eps, ratio)
        fits["mass_log_coefficient"] = a
        fits["mass_log_coefficient_expected"] = 8.0 * w
        passes["mass_log_coefficient"] = bool(abs(a / (8.0 * w) - 1) <= rel)
        ent = rep.entropy / (eps**2 * np.log(1.0 / eps))
        lo, hi = entropy_brackets(cut.rho, eps)
        sel = eps <= 0.05
        fits["entropy_bracket_min_gap"] = float(np.min(np.minimum(ent - lo, hi - ent)[sel])) if sel.any() else float("nan")
        passes["entropy_bracket"] = bool(sel.any() and np.all((lo[sel] <= ent[sel]) & (ent[sel] <= hi[sel])))
    else:
        rel = 0.05 if tol is None else tol
        target = math.sqrt(3.0) * w * cutoff_sq_integral(cut.rho)
        mass_ratio = rep.mass / eps
        ent_ratio = rep.entropy / (eps * np.log(eps))
        a, b, resid = _limit_fit(eps, ent_ratio)
        fits["mass_linear_coefficient"] = float(mass_ratio[-1])
        fits["mass_linear_spread"] = float(np.ptp(mass_ratio) / np.mean(mass_ratio))
        fits["entropy_linear_log_coefficient"] = a
        fits["linear_coefficient_expected"] = target
        passes["mass_linear_coefficient"] = bool(
            abs(mass_ratio[-1] / target - 1) <= rel and fits["mass_linear_spread"] <= rel
        )
        passes["entropy_linear_log_coefficient"] = bool(abs(a / target - 1) <= rel)
    return rep


def entropy_brackets(rho, eps):
    """Lower and upper constants bracketing ``int U^2 log U^2 / (eps^2 log(1/eps))`` for N = 4."""
    eps = np.asarray(eps, dtype=float)
    e2, r2 = eps * eps, rho * rho
    w = sphere_area(4)
    lo = 8.0 * np.log(8.0 * (e2 + r2) / (math.e * (e2 + 4 * r2) ** 2)) * w
    hi = 8.0 * np.log(8.0 * math.e * (e2 + 4 * r2) / (e2 + r2) ** 2) * w
    return lo, hi
