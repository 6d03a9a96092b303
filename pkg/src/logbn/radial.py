"""Radial profiles on R^N and adaptive 1-d quadrature for them."""

import math

import numpy as np
from scipy import integrate, optimize

from .domain import check_dimension


def sphere_area(N):
    """Surface area of the unit sphere S^{N-1} (4*pi for N=3, 2*pi^2 for N=4)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def instanton_amplitude(N):
    return (N * (N - 2)) ** ((N - 2) / 4)


def instanton(N, eps, r):
    """Aubin-Talenti bubble ``[N(N-2)]^{(N-2)/4} (eps / (eps^2 + r^2))^{(N-2)/2}``."""
    N = check_dimension(N)
    r = np.asarray(r, dtype=float)
    val = instanton_amplitude(N) * (eps / (eps * eps + r * r)) ** ((N - 2) / 2)
    return float(val) if val.ndim == 0 else val


def instanton_dr(N, eps, r):
    r = np.asarray(r, dtype=float)
    return -instanton_amplitude(N) * (N - 2) * eps ** ((N - 2) / 2) * r * (eps * eps + r * r) ** (-N / 2)


def instanton_log_sq(N, eps, r):
    """``log u_eps(r)^2`` without forming the (possibly underflowing) value."""
    r = np.asarray(r, dtype=float)
    return 2.0 * math.log(instanton_amplitude(N)) + (N - 2) * (np.log(eps) - np.log(eps * eps + r * r))


def geometric_breaks(lo, hi, scale, per_decade=2):
    """Breakpoints 0, scale*10^(k/per_decade), ..., hi, clipped to (lo, hi)."""
    pts = [lo]
    if scale > lo:
        x = scale
        while x < hi:
            if x > lo:
                pts.append(x)
            x *= 10.0 ** (1.0 / per_decade)
    pts.append(hi)
    return sorted(set(pts))


def shell_integral(N, integrand, breaks, rtol=1e-12):
    """``omega_N * int integrand(r) r^{N-1} dr`` summed over consecutive breakpoint pieces."""
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(
            lambda r: integrand(r) * r ** (N - 1), a, b, epsabs=0.0, epsrel=rtol, limit=200
        )
        total += val
    return sphere_area(N) * total


def truncation_radius(N, eps, integrand, rel=1e-14):
    """Radius beyond which ``integrand(r) r^{N-1}`` stays below ``rel`` times its peak.

    The instanton integrands decay like a power of r, so the crossing is
    bracketed on a log scale and found by root finding.
    """
    f = lambda r: integrand(r) * r ** (N - 1)
    rs = eps * np.logspace(-3, 3, 601)
    peak = max(f(r) for r in rs)
    g = lambda t: math.log(f(math.exp(t))) - math.log(rel * peak)
    lo = math.log(rs[int(np.argmax([f(r) for r in rs]))])
    hi = lo + 1.0
    while g(hi) > 0:
        hi += 2.0
    return math.exp(optimize.brentq(g, lo, hi, xtol=1e-10))
