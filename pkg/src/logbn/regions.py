"""Existence / nonexistence classification of the (lambda, mu) plane.

Labels, in order of precedence:

    nonexistence_T14   mu < 0 and the nonexistence expression is >= 0
    A0_exists          mu > 0, N >= 4
    B0_exists          N = 3, (lam, mu) in B0
    C0_exists          N = 3, (lam, mu) in C0 \\ B0
    N4_exists_eta3     N = 4, (lam, mu) in B0 u C0 and 32 e^{lam/mu} < rho_max^2
    unknown            everything else, region boundaries included

A verdict's margin is the value of the inequality that decided it. For
``unknown`` it is the largest (least violated) candidate inequality, so it is
never positive.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .constants import first_eigenpair, sobolev_constant
from .domain import DomainSpec, build_grid, check_dimension, rho_max
from .errors import RegimeError, UsageError
from .functional import Params
from .solvers import b0_margin, c0_margin

logger = logging.getLogger(__name__)

LABELS = ("A0_exists", "B0_exists", "C0_exists", "N4_exists_eta3", "nonexistence_T14", "unknown")
EXISTENCE = ("A0_exists", "B0_exists", "C0_exists", "N4_exists_eta3")
CURVES = ("tau1", "eta1", "eta2", "eta3")


@dataclass(frozen=True)
class DomainConstants:
    lambda1: float
    volume: float
    S: float
    rho_max: float
    N: int

    def __post_init__(self):
        check_dimension(self.N)
        for name in ("lambda1", "volume", "S", "rho_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise UsageError(f"{name} must be positive and finite, got {v}", field=name)

    @classmethod
    def from_spec(cls, spec: DomainSpec, eigen: str = "auto", tol: float = 1e-8) -> "DomainConstants":
        """Constants for a domain.

        ``eigen="auto"`` uses the closed form ``pi^2 sum 1/L_i^2`` for boxes and
        the discrete eigenvalue otherwise; ``"grid"`` always uses the grid.
        """
        if eigen not in ("auto", "grid"):
            raise UsageError("eigen must be 'auto' or 'grid'", field="eigen")
        grid = None
        if eigen == "auto" and spec.kind == "box":
            lam1 = math.pi**2 * sum(1.0 / L**2 for L in spec.axis_extents())
        else:
            grid = build_grid(spec)
            lam1 = first_eigenpair(grid, tol=tol).lambda1
        vol = spec.exact_volume()
        if vol is None:
            grid = grid if grid is not None else build_grid(spec)
            vol = grid.volume
        return cls(lambda1=lam1, volume=vol, S=sobolev_constant(spec.N).S, rho_max=rho_max(spec, grid), N=spec.N)


@dataclass(frozen=True)
class RegionVerdict:
    label: str
    basis: str
    margin: float
    values: Dict[str, float] = field(default_factory=dict)

    @property
    def exists(self) -> bool:
        return self.label in EXISTENCE


# -- defining expressions --------------------------------------------------------------


def _xlogx(a: float) -> float:
    # a underflows to 0 for subnormal mu; the limit of a log a is 0
    return a * math.log(a) if a > 0 else 0.0


def nonexistence_value(p: Params, lambda1: float) -> float:
    """``-(N-2)mu/2 + (N-2)mu/2 log(-(N-2)mu/2) + lam - lambda1`` (mu < 0)."""
    if not p.mu < 0:
        return -math.inf
    a = -(p.N - 2) * p.mu / 2.0
    return a - _xlogx(a) + p.lam - lambda1


def nonexistence_predicate(p: Params, lambda1: float) -> bool:
    """True iff mu < 0 and the nonexistence expression is >= 0 (equality included)."""
    return p.mu < 0 and nonexistence_value(p, lambda1) >= 0


def eta3_value(p: Params, rho_max: float) -> float:
    """``rho_max^2 - 32 e^{lam/mu}``; positive on the existence side."""
    if not p.mu < 0:
        return -math.inf
    expo = p.lam / p.mu
    return rho_max**2 - (32.0 * math.exp(expo) if expo < 700 else math.inf)


def curve_values(p: Params, k: DomainConstants) -> Dict[str, float]:
    """Signed value of each curve's defining expression at (lam, mu)."""
    return {
        "tau1": nonexistence_value(p, k.lambda1),
        "eta1": b0_margin(p, k.lambda1, k.volume, k.S) if p.mu < 0 else -math.inf,
        "eta2": c0_margin(p, k.volume, k.S) if p.mu < 0 else -math.inf,
        "eta3": eta3_value(p, k.rho_max),
    }


def classify(p: Params, k: DomainConstants) -> RegionVerdict:
    if p.N != k.N:
        raise UsageError(f"params have N={p.N} but constants have N={k.N}", field="N")
    vals = curve_values(p, k)
    if p.mu < 0 and vals["tau1"] >= 0:
        return RegionVerdict("nonexistence_T14", "nonexistence predicate (>= 0)", vals["tau1"], vals)
    if p.mu > 0:
        if p.N >= 4:
            return RegionVerdict("A0_exists", "A0: mu > 0, N >= 4", p.mu, vals)
        return RegionVerdict("unknown", "mu > 0 with N = 3 is not covered", 0.0, vals)
    if p.mu == 0:
        return RegionVerdict("unknown", "mu = 0 is not covered", 0.0, vals)
    # mu < 0 from here on
    b0 = vals["eta1"] if 0 <= p.lam < k.lambda1 else -math.inf
    c0 = vals["eta2"]
    region = max(b0, c0)
    if p.N == 3:
        if b0 > 0:
            return RegionVerdict("B0_exists", "B0, N = 3", b0, vals)
        if c0 > 0:
            return RegionVerdict("C0_exists", "C0, N = 3", c0, vals)
        return RegionVerdict("unknown", "outside B0 u C0 and the nonexistence set", max(region, vals["tau1"]), vals)
    if p.N == 4:
        if region > 0 and vals["eta3"] > 0:
            return RegionVerdict("N4_exists_eta3", "B0 u C0 with 32 e^{lam/mu} < rho_max^2, N = 4", vals["eta3"], vals)
        cand = min(region, vals["eta3"])
        return RegionVerdict("unknown", "N = 4, mu < 0 outside the eta3 existence set", max(cand, vals["tau1"]), vals)
    return RegionVerdict("unknown", "N = 5 with mu < 0 is not covered", vals["tau1"], vals)


# -- scalar function of the nonexistence argument ------------------------------------


class FMin(NamedTuple):
    s0: float
    fmin: float
    scan_min: float
    scan_ok: bool


def f_values(p: Params, lambda1: float, s):
    """``f(s) = s^{2*-2} + mu log s^2 + lam - lambda1``."""
    s = np.asarray(s, dtype=float)
    return s ** (p.two_star - 2.0) + p.mu * np.log(s * s) + p.lam - lambda1


def f_min(p: Params, lambda1: float, samples: int = 100_000, decades: float = 6.0) -> FMin:
    """Closed-form minimiser ``s0 = (-(N-2)mu/2)^{(N-2)/4}`` and ``f(s0)``, cross-checked by a log scan."""
    if not p.mu < 0:
        raise RegimeError("f has an interior minimum only for mu < 0")
    s0 = (-(p.N - 2) * p.mu / 2.0) ** ((p.N - 2) / 4.0)
    fmin = float(f_values(p, lambda1, s0))
    s = s0 * np.logspace(-decades, decades, samples)
    scan = float(np.min(f_values(p, lambda1, s)))
    return FMin(s0=s0, fmin=fmin, scan_min=scan, scan_ok=bool(scan >= fmin - 1e-8 * max(1.0, abs(fmin))))


# -- curves ------------------------------------------------------------------------------


def curve_lambda(curve: str, mu: float, k: DomainConstants) -> float:
    """lambda on ``curve`` at ``mu``; raises RegimeError outside the curve's range."""
    N = k.N
    if not mu < 0:
        raise RegimeError("curves are defined for mu < 0")
    if curve == "tau1":
        a = -(N - 2) * mu / 2.0
        return k.lambda1 - a + _xlogx(a)
    if curve == "eta1":
        x = -N * mu * k.volume / (2.0 * k.S ** (N / 2))
        if not 0 < x <= 1:
            raise RegimeError(f"eta1 needs -N mu |Omega| / (2 S^(N/2)) in (0, 1], got {x:g}")
        return k.lambda1 * (1.0 - x ** (2.0 / N))
    if curve == "eta2":
        y = -2.0 * k.S ** (N / 2) / (N * mu * k.volume)
        return -mu * math.log(y)
    if curve == "eta3":
        return mu * math.log(k.rho_max**2 / 32.0)
    raise UsageError(f"curve must be one of {CURVES}", field="curve")


def curve_residual(curve: str, lam: float, mu: float, k: DomainConstants) -> float:
    """Relative residual of the curve's defining equation at (lam, mu)."""
    p = Params(lam, mu, k.N)
    v = curve_values(p, k)[curve]
    scale = {
        "tau1": max(abs(lam), k.lambda1, 1.0),
        "eta1": k.S ** (k.N / 2) / k.N,
        "eta2": k.S ** (k.N / 2) / k.N,
        "eta3": k.rho_max**2,
    }[curve]
    return abs(v) / scale


def curve_samples(curve: str, mu_range: Sequence[float], k: DomainConstants, count: int,
                  return_skipped: bool = False):
    """``count`` points (lam, mu) on ``curve`` for mu evenly spaced in ``mu_range``.

    Samples where the curve is undefined are skipped and logged.
    """
    if curve not in CURVES:
        raise UsageError(f"curve must be one of {CURVES}", field="curve")
    if int(count) < 2:
        raise UsageError("count must be at least 2", field="count")
    lo, hi = float(mu_range[0]), float(mu_range[1])
    if not (lo < 0 and hi < 0):
        raise UsageError("mu_range must lie in (-inf, 0)", field="mu_range")
    out: List[Tuple[float, float]] = []
    skipped: List[Tuple[float, str]] = []
    for mu in np.linspace(lo, hi, int(count)):
        try:
            out.append((curve_lambda(curve, float(mu), k), float(mu)))
        except RegimeError as exc:
            skipped.append((float(mu), str(exc)))
    if skipped:
        logger.info("%s: skipped %d of %d samples", curve, len(skipped), int(count))
    return (out, skipped) if return_skipped else out


def write_curves_csv(path, curves: Dict[str, Sequence[Tuple[float, float]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "mu", "lambda"])
        for name in sorted(curves):
            for lam, mu in curves[name]:
                w.writerow([name, repr(float(mu)), repr(float(lam))])


def read_curves_csv(path) -> Dict[str, List[Tuple[float, float]]]:
    out: Dict[str, List[Tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["curve"], []).append((float(row["lambda"]), float(row["mu"])))
    return out


# -- phase diagram -------------------------------------------------------------------------


@dataclass
class PhaseCell:
    lam: float
    mu: float
    label: str
    basis: str
    margin: float
    solver_status: str = ""
    agrees: Optional[bool] = None


@dataclass
class PhaseDiagram:
    N: int
    cells: List[PhaseCell]

    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.cells])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "mu", "label", "basis", "margin", "solver_status", "agrees"])
            for c in self.cells:
                agrees = "" if c.agrees is None else int(c.agrees)
                w.writerow([repr(c.lam), repr(c.mu), c.label, c.basis, repr(c.margin), c.solver_status, agrees])

    @classmethod
    def from_csv(cls, path, N: int) -> "PhaseDiagram":
        cells = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                cells.append(PhaseCell(
                    lam=float(r["lambda"]), mu=float(r["mu"]), label=r["label"], basis=r["basis"],
                    margin=float(r["margin"]), solver_status=r["solver_status"],
                    agrees=None if r["agrees"] == "" else bool(int(r["agrees"])),
                ))
        return cls(N=N, cells=cells)


def _confirm_one(args):
    spec, lam, mu, cfg = args
    from .solvers import mountain_pass_solve

    grid = build_grid(spec)
    return mountain_pass_solve(grid, Params(lam, mu, spec.N), cfg).status


def phase_diagram(k: DomainConstants, lambda_range, mu_range, res: int, confirm: bool = False,
                  spec: Optional[DomainSpec] = None, budget: int = 4, cfg=None, jobs: int = 1) -> PhaseDiagram:
    """Classify a ``res x res`` lattice; optionally run the solver on a few cells.

    Confirm mode solves at up to ``budget`` labelled cells (evenly spread over
    the non-unknown ones) on ``spec``'s grid and records whether the solver
    status agrees with the label. Unknown cells are never solved.
    """
    if int(res) < 2:
        raise UsageError("res must be at least 2", field="res")
    lams = np.linspace(float(lambda_range[0]), float(lambda_range[1]), int(res))
    mus = np.linspace(float(mu_range[0]), float(mu_range[1]), int(res))
    cells = []
    for mu in mus:
        for lam in lams:
            v = classify(Params(float(lam), float(mu), k.N), k)
            cells.append(PhaseCell(float(lam), float(mu), v.label, v.basis, float(v.margin)))
    if confirm:
        if spec is None:
            raise UsageError("confirm mode needs a domain spec", field="domain")
        from .solvers import MPConfig

        cfg = cfg or MPConfig()
        known = [i for i, c in enumerate(cells) if c.label != "unknown"]
        pick = [known[j] for j in np.unique(np.linspace(0, len(known) - 1, min(budget, len(known))).astype(int))] if known else []
        tasks = [(spec, cells[i].lam, cells[i].mu, cfg) for i in pick]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                statuses = list(ex.map(_confirm_one, tasks))
        else:
            statuses = [_confirm_one(t) for t in tasks]
        for i, st in zip(pick, statuses):
            c = cells[i]
            c.solver_status = st
            if c.label in EXISTENCE:
                c.agrees = st == "converged"
            else:
                c.agrees = st in ("collapsed_to_zero", "max_iter")
    return PhaseDiagram(N=k.N, cells=cells)


# -- estimator -------------------------------------------------------------------------------


class RegionClassifier(ClassifierMixin, BaseEstimator):
    """Rule-based classifier over rows ``(lam, mu)``.

    Nothing is learned: ``fit`` only validates the domain constants and sets
    ``classes_``. ``decision_function`` returns the verdict margins.
    """

    def __init__(self, N=3, lambda1=None, volume=1.0, S=None, rho_max=0.5):
        self.N = N
        self.lambda1 = lambda1
        self.volume = volume
        self.S = S
        self.rho_max = rho_max

    def fit(self, X=None, y=None):
        N = check_dimension(self.N)
        lam1 = self.lambda1 if self.lambda1 is not None else N * math.pi**2
        S = self.S if self.S is not None else sobolev_constant(N).S
        self.constants_ = DomainConstants(lambda1=float(lam1), volume=float(self.volume), S=float(S),
                                          rho_max=float(self.rho_max), N=N)
        self.classes_ = np.array(LABELS)
        return self

    def _verdicts(self, X):
        check_is_fitted(self, "constants_")
        X = check_array(X, dtype=float, ensure_2d=True)
        if X.shape[1] != 2:
            raise UsageError(f"X must have two columns (lam, mu), got {X.shape[1]}", field="X")
        return [classify(Params(float(a), float(b), self.N), self.constants_) for a, b in X]

    def predict(self, X):
        return np.array([v.label for v in self._verdicts(X)])

    def decision_function(self, X):
        return np.array([v.margin for v in self._verdicts(X)])

    def score(self, X, y, sample_weight=None):
        return float(np.average(self.predict(X) == np.asarray(y), weights=sample_weight))
