"""Mountain-pass path deformation and Nehari projected gradient flow.

Both solvers descend along the Sobolev gradient ``d = L^{-1} G(u)`` (the
Riesz representative of I'(u) in the Dirichlet inner product), which keeps
step sizes independent of the grid spacing. Line searches are Armijo
backtracking only: the log term makes G non-Lipschitz where u crosses 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator

from .constants import first_eigenpair
from .domain import Grid, check_field, l2_norm
from .errors import RegimeError, ScalingError, UsageError
from .functional import (
    Params,
    energy,
    fiber_coefficients,
    fiber_energy,
    fiber_roots,
    nehari_g,
    nehari_project,
    reaction,
)

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
ENERGY_NOISE = 1e-12  # relative rounding level of a grid energy sum
MAX_HALVINGS = 40
COLLAPSE_RATIO = 1e-6
DIRECTIONS = ("eigenfunction", "bump", "file")
STATUSES = ("converged", "collapsed_to_zero", "max_iter")


@dataclass
class MPConfig:
    path_points: int = 16
    descent_step: float = 1.0
    max_outer: int = 500
    grad_tol: float = 1e-5
    energy_tol: float = 1e-6
    seed: int = 0
    initial_direction: str = "eigenfunction"
    direction_file: Optional[str] = None
    damping: float = 0.5

    def __post_init__(self):
        if int(self.path_points) < 16:
            raise UsageError("path_points must be at least 16", field="path_points")
        for name in ("descent_step", "grad_tol", "energy_tol", "damping"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive", field=name)
        if int(self.max_outer) < 1:
            raise UsageError("max_outer must be at least 1", field="max_outer")
        if self.initial_direction not in DIRECTIONS:
            raise UsageError(f"initial_direction must be one of {DIRECTIONS}", field="initial_direction")
        if self.initial_direction == "file" and not self.direction_file:
            raise UsageError("initial_direction=file needs direction_file", field="direction_file")


@dataclass
class MPResult:
    u: np.ndarray
    level: float
    residual: float
    iterations: int
    status: str
    history: List[float] = field(default_factory=list)
    nehari: float = float("nan")

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass(frozen=True)
class GeometryEstimate:
    alpha: float
    rho: float
    regime: str


# -- mountain-pass geometry ----------------------------------------------------


def in_B0(p: Params, lambda1, volume, S) -> bool:
    return p.mu < 0 and 0 <= p.lam < lambda1 and b0_margin(p, lambda1, volume, S) > 0


def in_C0(p: Params, volume, S) -> bool:
    return p.mu < 0 and c0_margin(p, volume, S) > 0


def b0_margin(p: Params, lambda1, volume, S) -> float:
    N = p.N
    ratio = max((lambda1 - p.lam) / lambda1, 0.0)
    return ratio ** (N / 2) * S ** (N / 2) / N + 0.5 * p.mu * volume


def c0_margin(p: Params, volume, S) -> float:
    N = p.N
    # e^{-lam/mu} may overflow for mu -> 0-; the margin is then -inf
    expo = -p.lam / p.mu
    weight = math.exp(expo) if expo < 700 else math.inf
    return S ** (N / 2) / N + 0.5 * p.mu * weight * volume


def geometry_estimate(p: Params, lambda1: float, volume: float, S: float) -> GeometryEstimate:
    """Explicit ``(alpha, rho)`` of the mountain-pass geometry in B0 or C0.

    B0 is tried first; a pair in both regions gets the B0 constants.
    """
    N = p.N
    if p.mu < 0 and 0 <= p.lam < lambda1:
        ratio = (lambda1 - p.lam) / lambda1
        alpha = b0_margin(p, lambda1, volume, S)
        if alpha > 0:
            return GeometryEstimate(alpha=alpha, rho=ratio ** ((N - 2) / 4) * S ** (N / 4), regime="B0")
    if p.mu < 0:
        alpha = c0_margin(p, volume, S)
        if alpha > 0:
            return GeometryEstimate(alpha=alpha, rho=S ** (N / 4), regime="C0")
    raise RegimeError(f"(lam, mu) = ({p.lam:g}, {p.mu:g}) lies in neither B0 nor C0")


# -- shared numerics -------------------------------------------------------------


def _energy_total(grid: Grid, p: Params, u) -> float:
    return energy(grid, p, u).total


def _gradient_and_energy(grid: Grid, p: Params, u):
    Lu = grid.matrix @ u
    up = np.maximum(u, 0.0)
    c = grid.cell
    crit = float(np.sum(up**p.two_star)) * c
    mass = float(up @ up) * c
    nz = up > 0
    ent = float(np.sum(up[nz] ** 2 * np.log(up[nz] ** 2))) * c
    E = 0.5 * float(u @ Lu) * c - crit / p.two_star - 0.5 * p.lam * mass - 0.5 * p.mu * (ent - mass)
    return E, Lu - reaction(p, u)


def _h_norm(grid: Grid, v) -> float:
    return math.sqrt(max(float(v @ (grid.matrix @ v)) * grid.cell, 0.0))


def residual_check(grid: Grid, p: Params, u) -> float:
    """``||L u - u+^{2*-1} - lam u+ - mu u+ log u+^2||_2 / max(1, ||u||_2)``."""
    u = check_field(grid, u)
    G = grid.matrix @ u - reaction(p, u)
    return l2_norm(grid, G) / max(1.0, l2_norm(grid, u))


def positivity_check(grid: Grid, u) -> bool:
    """True iff u > 0 at every interior point."""
    return bool(np.all(check_field(grid, u) > 0))


def _armijo(grid, p, u, E, d, slope, step, max_move=math.inf):
    """Backtrack from ``step`` until ``I(u - a d) <= I(u) - ARMIJO a slope``.

    ``slope`` is ``||d||_H^2``; the first trial is capped so the node moves at
    most ``max_move`` in the Dirichlet norm. Near a critical point the
    required decrease drops below the rounding error of I, so the test is
    relaxed by ``ENERGY_NOISE * max(1, |I(u)|)``.
    """
    a = min(step, max_move / math.sqrt(slope)) if slope > 0 else step
    noise = ENERGY_NOISE * max(1.0, abs(E))
    for _ in range(MAX_HALVINGS):
        v = u - a * d
        Ev = _energy_total(grid, p, v)
        if Ev <= E - ARMIJO * a * slope + noise:
            return v, Ev, a
        a *= 0.5
    return u, E, 0.0


# -- initial data ----------------------------------------------------------------


def initial_direction(grid: Grid, cfg: MPConfig, phi1=None) -> np.ndarray:
    """Nonnegative starting direction with unit Dirichlet norm."""
    if cfg.initial_direction == "eigenfunction":
        d = np.asarray(phi1) if phi1 is not None else first_eigenpair(grid, tol=1e-6).phi1
    elif cfg.initial_direction == "bump":
        rng = np.random.default_rng(cfg.seed)
        x = grid.coordinates()
        lo, hi = x.min(axis=0), x.max(axis=0)
        centre = lo + (hi - lo) * rng.uniform(0.3, 0.7, size=grid.N)
        width = (hi - lo).min() * rng.uniform(0.15, 0.35)
        bump = np.exp(-np.sum((x - centre) ** 2, axis=1) / (2 * width**2))
        # torsion function vanishes on the boundary and is positive inside
        d = bump * grid.solve(np.ones(grid.n))
    else:
        from .io import read_field

        d = read_field(cfg.direction_file)[0]
    d = np.maximum(check_field(grid, d), 0.0)
    if not np.any(d > 0):
        raise UsageError("initial direction has no positive part", field="initial_direction")
    return d / _h_norm(grid, d)


def find_negative_endpoint(grid: Grid, p: Params, direction, t_max: float = 1e150) -> np.ndarray:
    """Return ``w = t0 * direction`` with ``I(w) < 0`` beyond the fiber maximum, doubling ``t0``."""
    direction = check_field(grid, direction)
    if np.any(direction < 0) or not np.any(direction > 0):
        raise UsageError("direction must be nonnegative and nonzero", field="direction")
    k = fiber_coefficients(grid, direction)
    roots = fiber_roots(p, k)
    # for mu < 0 the energy is already negative near t = 0, so start past the fiber peak
    t = max(1.0, roots[-1] if roots else 1.0)
    while True:
        val = float(fiber_energy(p, k, t))
        if not math.isfinite(val) or t > t_max:
            raise ScalingError(f"energy along the ray did not become negative before t={t:g}")
        if val < 0:
            return t * direction
        t *= 2.0


# -- mountain pass ---------------------------------------------------------------


class _Path:
    """Polyline of fields from 0 to a negative-energy endpoint."""

    def __init__(self, grid, p, endpoint, m):
        self.grid, self.p = grid, p
        s = np.linspace(0.0, 1.0, m)
        self.nodes = s[:, None] * endpoint[None, :]
        self.E = np.array([_energy_total(grid, p, v) for v in self.nodes])

    def top(self) -> int:
        return int(np.argmax(self.E))

    def segment_max(self, k):
        """Maximise I on the two segments adjacent to node k; move node k there."""
        best = (self.E[k], None, None)
        for j in (k - 1, k + 1):
            if j < 0 or j >= len(self.nodes):
                continue
            a, b = self.nodes[k], self.nodes[j]
            f = lambda s: -_energy_total(self.grid, self.p, a + s * (b - a))
            r = optimize.minimize_scalar(f, bounds=(0.0, 0.5), method="bounded", options={"xatol": 1e-6})
            if -r.fun > best[0]:
                best = (-r.fun, j, r.x)
        if best[1] is not None:
            j, s = best[1], best[2]
            self.nodes[k] = self.nodes[k] + s * (self.nodes[j] - self.nodes[k])
            self.E[k] = best[0]

    def reparametrize(self, k):
        """Equal Dirichlet arclength on each side of the pinned node k."""
        for lo, hi in ((0, k), (k, len(self.nodes) - 1)):
            if hi - lo < 2:
                continue
            seg = self.nodes[lo : hi + 1]
            diffs = np.diff(seg, axis=0)
            lens = np.array([_h_norm(self.grid, d) for d in diffs])
            cum = np.concatenate([[0.0], np.cumsum(lens)])
            if cum[-1] <= 0:
                continue
            targets = np.linspace(0.0, cum[-1], hi - lo + 1)[1:-1]
            new = []
            for t in targets:
                i = min(int(np.searchsorted(cum, t, side="right")) - 1, len(lens) - 1)
                w = (t - cum[i]) / lens[i] if lens[i] > 0 else 0.0
                new.append(seg[i] + w * diffs[i])
            for off, v in enumerate(new, start=lo + 1):
                self.nodes[off] = v
                self.E[off] = _energy_total(self.grid, self.p, v)


def mountain_pass_solve(grid: Grid, p: Params, cfg: Optional[MPConfig] = None, phi1=None, endpoint=None) -> MPResult:
    """Path-deformation mountain-pass algorithm.

    Every free node takes a damped Sobolev descent step; the top node is first
    moved to the maximum of I along its adjacent segments and then descends
    with a full backtracking step. The path is reparametrized to equal
    Dirichlet arclength on both sides of the top node after each sweep.
    """
    cfg = cfg or MPConfig()
    if endpoint is None:
        endpoint = find_negative_endpoint(grid, p, initial_direction(grid, cfg, phi1))
    scale = _h_norm(grid, endpoint)
    path = _Path(grid, p, endpoint, int(cfg.path_points))
    last = len(path.nodes) - 1
    history: List[float] = []
    status, top_res = "max_iter", math.inf
    it = 0
    for it in range(1, int(cfg.max_outer) + 1):
        k = path.top()
        if k == 0 or _h_norm(grid, path.nodes[k]) < COLLAPSE_RATIO * scale:
            status = "collapsed_to_zero"
            break
        path.segment_max(k)
        Ek, Gk = _gradient_and_energy(grid, p, path.nodes[k])
        history.append(Ek)
        top_res = l2_norm(grid, Gk) / max(1.0, l2_norm(grid, path.nodes[k]))
        if top_res <= cfg.grad_tol:
            status = "converged"
            break
        for j in range(1, last):
            # nodes below the zero level never carry the maximum; leave them
            if j != k and path.E[j] <= 0:
                continue
            E, G = (Ek, Gk) if j == k else _gradient_and_energy(grid, p, path.nodes[j])
            d = grid.solve(G)
            slope = float(G @ d) * grid.cell
            if slope <= 0:
                continue
            step = cfg.descent_step if j == k else cfg.damping * cfg.descent_step
            path.nodes[j], path.E[j], _ = _armijo(grid, p, path.nodes[j], E, d, slope, step, 0.25 * scale)
        path.reparametrize(k)
        logger.debug("mp iter %d: top=%d level=%.10g residual=%.3e", it, k, Ek, top_res)
    k = path.top()
    u = path.nodes[k]
    if status == "collapsed_to_zero":
        u_out = np.maximum(u, 0.0)
        return MPResult(u=u_out, level=float(path.E[k]), residual=residual_check(grid, p, u_out),
                        iterations=it, status=status, history=history)
    u_out = np.maximum(u, 0.0)
    if not np.any(u_out > 0):
        status = "collapsed_to_zero"
    level = _energy_total(grid, p, u_out)
    res = residual_check(grid, p, u_out)
    if status == "converged" and res > cfg.grad_tol:
        status = "max_iter"
    return MPResult(u=u_out, level=level, residual=res, iterations=it, status=status, history=history,
                    nehari=nehari_g(grid, p, u_out))


# -- Nehari flow -----------------------------------------------------------------


def ground_state_search(grid: Grid, p: Params, cfg: Optional[MPConfig] = None, phi1=None, u0=None) -> MPResult:
    """Projected Sobolev-gradient flow on the Nehari set.

    Each step descends along ``L^{-1} G(u)`` and rescales the trial field back
    onto ``g = 0`` with ``nehari_project``; the step is accepted under an
    Armijo condition on the projected energy.
    """
    cfg = cfg or MPConfig()
    if p.mu < 0:
        logger.info("Nehari fiber may have two roots for mu < 0; the larger is used")
    u = initial_direction(grid, cfg, phi1) if u0 is None else np.maximum(check_field(grid, u0), 0.0)
    u = nehari_project(grid, p, u) * u
    E = _energy_total(grid, p, u)
    history = [E]
    status, res = "max_iter", math.inf
    step = cfg.descent_step
    it = 0
    for it in range(1, int(cfg.max_outer) + 1):
        _, G = _gradient_and_energy(grid, p, u)
        res = l2_norm(grid, G) / max(1.0, l2_norm(grid, u))
        if res <= cfg.grad_tol:
            status = "converged"
            break
        d = grid.solve(G)
        slope = float(G @ d) * grid.cell
        a = min(2.0 * step, cfg.descent_step)
        for _ in range(MAX_HALVINGS):
            v = u - a * d
            if np.any(v > 0):
                v = nehari_project(grid, p, v) * v
                Ev = _energy_total(grid, p, v)
                if Ev <= E - ARMIJO * a * slope + ENERGY_NOISE * max(1.0, abs(E)):
                    break
            a *= 0.5
        else:
            logger.info("Nehari flow line search stalled at iteration %d", it)
            break
        u, E, step = v, Ev, a
        history.append(E)
    u_out = np.maximum(u, 0.0)
    res = residual_check(grid, p, u_out)
    if status == "converged" and res > cfg.grad_tol:
        status = "max_iter"
    return MPResult(u=u_out, level=_energy_total(grid, p, u_out), residual=res, iterations=it,
                    status=status, history=history, nehari=nehari_g(grid, p, u_out))


# -- estimator wrappers ----------------------------------------------------------


class _SolverEstimator(BaseEstimator):
    """Shared parameters; ``fit(grid)`` runs the solve and stores trailing-underscore results."""

    def __init__(self, lam=0.0, mu=1.0, path_points=16, descent_step=1.0, max_outer=500, grad_tol=1e-5,
                 energy_tol=1e-6, seed=0, initial_direction="eigenfunction", direction_file=None, damping=0.5):
        self.lam = lam
        self.mu = mu
        self.path_points = path_points
        self.descent_step = descent_step
        self.max_outer = max_outer
        self.grad_tol = grad_tol
        self.energy_tol = energy_tol
        self.seed = seed
        self.initial_direction = initial_direction
        self.direction_file = direction_file
        self.damping = damping

    def _config(self) -> MPConfig:
        keys = ("path_points", "descent_step", "max_outer", "grad_tol", "energy_tol", "seed",
                "initial_direction", "direction_file", "damping")
        return MPConfig(**{k: getattr(self, k) for k in keys})

    def _store(self, grid, result: MPResult):
        self.grid_ = grid
        self.result_ = result
        self.u_ = result.u
        self.level_ = result.level
        self.residual_ = result.residual
        self.status_ = result.status
        self.n_iter_ = result.iterations
        return self

    def score(self, grid=None, y=None) -> float:
        """Negative scaled residual of the fitted field (higher is better)."""
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "u_")
        g = self.grid_ if grid is None else grid
        return -residual_check(g, Params(float(self.lam), float(self.mu), g.N), self.u_)


class MountainPassSolver(_SolverEstimator):
    def fit(self, grid: Grid, y=None, phi1=None):
        p = Params(float(self.lam), float(self.mu), grid.N)
        return self._store(grid, mountain_pass_solve(grid, p, self._config(), phi1=phi1))


class NehariGroundState(_SolverEstimator):
    def fit(self, grid: Grid, y=None, phi1=None, u0=None):
        p = Params(float(self.lam), float(self.mu), grid.N)
        return self._store(grid, ground_state_search(grid, p, self._config(), phi1=phi1, u0=u0))
