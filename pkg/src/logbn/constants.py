"""First Dirichlet eigenpair, best Sobolev constant and the log-Sobolev check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .domain import Grid, check_dimension, check_field, dirichlet_norm_sq, integrate, l2_norm
from .errors import AccuracyError, ConvergenceError, InvalidFieldError, UsageError
from .radial import geometric_breaks, instanton, instanton_dr, shell_integral, truncation_radius

logger = logging.getLogger(__name__)


@dataclass
class SpectralPair:
    lambda1: float
    phi1: np.ndarray
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class SobolevConstant:
    N: int
    S: float
    spread: float = 0.0


def first_eigenpair(grid: Grid, tol: float = 1e-8, max_iter: int = 500) -> SpectralPair:
    """Inverse power iteration with a conjugate-gradient inner solve.

    Stops when ``||L phi - lambda phi||_2 / lambda <= tol``. The inner CG
    tolerance is ``1e-2 * tol``. ``phi1`` is positive with unit L2 norm.
    """
    if not (0 < tol <= 1e-4):
        raise UsageError(f"eigen tolerance must lie in (0, 1e-4], got {tol}", field="tol")
    A = grid.matrix
    x = np.ones(grid.n)
    x /= l2_norm(grid, x)
    lam = float(x @ (A @ x)) / float(x @ x)
    res = math.inf
    for it in range(1, max_iter + 1):
        y, _ = spla.cg(A, x, x0=x / lam, rtol=1e-2 * tol, atol=0.0, maxiter=10 * grid.n)
        y /= l2_norm(grid, y)
        Ay = A @ y
        lam = float(y @ Ay) / float(y @ y)
        res = l2_norm(grid, Ay - lam * y) / lam
        x = y
        if res <= tol:
            break
    else:
        raise ConvergenceError(f"inverse iteration did not reach tol={tol:g} (residual {res:.3e})", residual=res)
    if x.sum() < 0:
        x = -x
    if np.any(x <= 0):
        # inexact inner solves can leave round-off negatives next to the boundary
        logger.warning("eigenfunction has %d non-positive entries; clipping", int(np.sum(x <= 0)))
        x = np.maximum(x, np.min(x[x > 0]))
        x /= l2_norm(grid, x)
    return SpectralPair(lambda1=lam, phi1=x, residual=res, iterations=it)


def sobolev_closed_form(N) -> float:
    """``pi N (N-2) (Gamma(N/2) / Gamma(N))^{2/N}``."""
    N = check_dimension(N)
    return math.pi * N * (N - 2) * (math.gamma(N / 2) / math.gamma(N)) ** (2.0 / N)


def instanton_integrals(N, eps):
    """``(int |grad u_eps|^2, int u_eps^{2*})`` over R^N by radial quadrature."""
    two_star = 2.0 * N / (N - 2)
    grad2 = lambda r: instanton_dr(N, eps, r) ** 2
    crit = lambda r: instanton(N, eps, r) ** two_star
    out = []
    for f in (grad2, crit):
        R = truncation_radius(N, eps, f)
        out.append(shell_integral(N, f, geometric_breaks(0.0, R, eps * 1e-2)))
    return tuple(out)


def sobolev_quotient(N, eps) -> float:
    grad2, crit = instanton_integrals(N, eps)
    two_star = 2.0 * N / (N - 2)
    return grad2 / crit ** (2.0 / two_star)


def sobolev_constant(N, eps_values=(0.1, 1.0, 10.0), digits: int = 4) -> SobolevConstant:
    """Rayleigh quotient of the instanton, checked for scale invariance.

    Raises AccuracyError when the quotients at ``eps_values`` disagree beyond
    ``digits`` significant digits.
    """
    N = check_dimension(N)
    q = np.array([sobolev_quotient(N, e) for e in eps_values])
    spread = float((q.max() - q.min()) / q.mean())
    if spread > 0.5 * 10.0 ** (-digits):
        raise AccuracyError(f"Sobolev quotient not scale invariant for N={N}: spread {spread:.2e}")
    return SobolevConstant(N=N, S=float(q[len(q) // 2]), spread=spread)


def sq_log_sq(u):
    """Pointwise ``u^2 log u^2`` with ``0 log 0 := 0``."""
    u = np.asarray(u, dtype=float)
    u2 = u * u
    out = np.zeros_like(u2)
    nz = u2 > 0
    out[nz] = u2[nz] * np.log(u2[nz])
    return out


def log_sobolev_check(grid: Grid, u, a: float, tol: float = 1e-12) -> dict:
    """Evaluate both sides of the logarithmic Sobolev inequality for ``u``.

    lhs = int u^2 log u^2 and
    rhs = (a/pi) ||grad u||^2 + (log |u|_2^2 - N (1 + log a)) |u|_2^2.
    """
    u = check_field(grid, u)
    if a <= 0:
        raise UsageError("a must be positive", field="a")
    m2 = integrate(grid, u * u)
    if not m2 > 0:
        raise InvalidFieldError("log-Sobolev check needs a nonzero field")
    lhs = integrate(grid, sq_log_sq(u))
    rhs = (a / math.pi) * dirichlet_norm_sq(grid, u) + (math.log(m2) - grid.N * (1.0 + math.log(a))) * m2
    scale = max(abs(lhs), abs(rhs), 1.0)
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + tol * scale), "a": a}
