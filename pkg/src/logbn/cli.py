"""Command-line front end.

    logbn COMMAND [--config FILE] [--set key=value ...] [--output-dir DIR] [--jobs N]

Commands: eigen, solve, classify, phasediagram, asymptotics, verify.

The config file is flat ``key = value`` text; ``#`` starts a comment. Keys:

    domain        box | ball | mask-file           (default box)
    N             3, 4 or 5                        (default 3)
    extents       box side lengths, comma separated, or one value for all axes
    radius        ball radius
    mask_file     path of a mask file (domain = mask-file)
    resolution    grid points per unit length      (default 32)
    lambda, mu    parameters; lambda also accepts "lambda1" or "<c>*lambda1"
    eigen_tol     eigen residual tolerance         (default 1e-8)
    method        mountain_pass | ground_state     (solve; default mountain_pass)
    path_points, descent_step, max_outer, grad_tol, energy_tol, seed,
    initial_direction, direction_file, damping     solver settings
    lambda_min, lambda_max, mu_min, mu_max, res    phasediagram lattice
    confirm, budget, curve_count                   phasediagram extras
    rho, eps                                       asymptotics (eps comma separated)
    output_dir    output directory (default $LOGBN_OUTPUT_DIR or the cwd)

Exit codes: 0 ok, 2 usage, 3 convergence, 4 numerical accuracy, 5 regime.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .constants import first_eigenpair, log_sobolev_check, sobolev_closed_form, sobolev_constant
from .domain import DomainSpec, build_grid, integrate, laplacian_apply, read_mask_file, rho_max
from .errors import AccuracyError, LogBNError, UsageError
from .functional import Params, energy, gradient, nehari_g
from .io import write_field, write_metadata
from .regions import (
    CURVES,
    DomainConstants,
    classify,
    curve_residual,
    curve_samples,
    phase_diagram,
    write_curves_csv,
)
from .solvers import MPConfig, ground_state_search, mountain_pass_solve, positivity_check
from .testfunctions import CutoffSpec, asymptotics_report

logger = logging.getLogger("logbn")

COMMANDS = ("eigen", "solve", "classify", "phasediagram", "asymptotics", "verify")
SOLVER_KEYS = {
    "path_points": int,
    "descent_step": float,
    "max_outer": int,
    "grad_tol": float,
    "energy_tol": float,
    "seed": int,
    "initial_direction": str,
    "direction_file": str,
    "damping": float,
}
KNOWN_KEYS = set(SOLVER_KEYS) | {
    "domain", "N", "extents", "radius", "mask_file", "resolution", "lambda", "mu", "eigen_tol", "method",
    "lambda_min", "lambda_max", "mu_min", "mu_max", "res", "confirm", "budget", "curve_count", "rho", "eps",
    "output_dir",
}


@dataclass
class RunConfig:
    command: str
    domain: DomainSpec
    params: Optional[Params]
    solver: MPConfig
    output_dir: Path
    seed: int = 0
    options: Dict[str, str] = field(default_factory=dict)
    jobs: int = 1


# -- config parsing ----------------------------------------------------------------


def parse_config_text(text: str) -> Dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive ("N")
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}", field="config") from exc
    return dict(cp["run"])


def parse_overrides(items: List[str]) -> Dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}", field=item)
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _num(raw: Dict[str, str], key: str, kind=float, default=None):
    if key not in raw:
        if default is None:
            raise UsageError(f"missing required key '{key}'", field=key)
        return default
    try:
        return kind(raw[key])
    except ValueError as exc:
        raise UsageError(f"bad value for '{key}': {raw[key]!r}", field=key) from exc


def _floats(raw: Dict[str, str], key: str) -> List[float]:
    try:
        return [float(x) for x in raw[key].split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list for '{key}': {raw[key]!r}", field=key) from exc


def _domain(raw: Dict[str, str]) -> DomainSpec:
    kind = raw.get("domain", "box")
    N = _num(raw, "N", int, 3)
    res = _num(raw, "resolution", int, 32)
    if kind == "box":
        ext = _floats(raw, "extents") if "extents" in raw else [1.0]
        extents = ext[0] if len(ext) == 1 else tuple(ext)
        return DomainSpec(kind="box", N=N, extents=extents, resolution=res)
    if kind == "ball":
        return DomainSpec(kind="ball", N=N, extents=_num(raw, "radius", float, 1.0), resolution=res)
    if kind == "mask-file":
        if "mask_file" not in raw:
            raise UsageError("domain = mask-file needs 'mask_file'", field="mask_file")
        return DomainSpec(kind="mask-file", N=N, extents=1.0, resolution=res, path=raw["mask_file"])
    raise UsageError(f"unknown domain kind {kind!r}", field="domain")


def _lambda(text: str, lambda1_fn) -> float:
    t = text.replace(" ", "")
    try:
        return float(t)
    except ValueError:
        pass
    if t == "lambda1":
        return lambda1_fn()
    if t.endswith("*lambda1"):
        try:
            return float(t[: -len("*lambda1")]) * lambda1_fn()
        except ValueError:
            pass
    raise UsageError(f"bad value for 'lambda': {text!r}", field="lambda")


def build_config(command: str, raw: Dict[str, str], output_dir: Optional[str] = None, jobs: int = 1) -> RunConfig:
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}", field="command")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}", field=unknown[0])
    domain = _domain(raw)
    solver_kw = {k: _num(raw, k, t) for k, t in SOLVER_KEYS.items() if k in raw}
    solver = MPConfig(**solver_kw)
    params = None
    if command in ("solve", "classify"):
        for key in ("lambda", "mu"):
            if key not in raw:
                raise UsageError(f"missing required key '{key}'", field=key)
        mu = _num(raw, "mu")
        params = Params(0.0, mu, domain.N)  # lambda is resolved lazily, it may reference lambda1
    out = output_dir or raw.get("output_dir") or os.environ.get("LOGBN_OUTPUT_DIR") or "."
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable", field="output_dir")
    if jobs < 1:
        raise UsageError("--jobs must be at least 1", field="jobs")
    return RunConfig(command=command, domain=domain, params=params, solver=solver, output_dir=out,
                     seed=solver.seed, options=dict(raw), jobs=jobs)


# -- commands ----------------------------------------------------------------------


def _grid(cfg: RunConfig):
    if cfg.domain.kind == "mask-file":
        grid = read_mask_file(cfg.domain.path)
        if grid.N != cfg.domain.N:
            raise UsageError(f"mask file is {grid.N}-dimensional but N = {cfg.domain.N}", field="N")
        return grid
    return build_grid(cfg.domain)


def _eigen_tol(cfg: RunConfig) -> float:
    return _num(cfg.options, "eigen_tol", float, 1e-8)


def _constants(cfg: RunConfig, grid=None, lambda1=None) -> DomainConstants:
    grid = grid if grid is not None else _grid(cfg)
    lam1 = lambda1 if lambda1 is not None else first_eigenpair(grid, tol=_eigen_tol(cfg)).lambda1
    vol = cfg.domain.exact_volume() if cfg.domain.kind != "mask-file" else None
    return DomainConstants(lambda1=lam1, volume=vol if vol is not None else grid.volume,
                           S=sobolev_closed_form(grid.N), rho_max=rho_max(cfg.domain, grid), N=grid.N)


def _resolve_params(cfg: RunConfig, lambda1_fn) -> Params:
    lam = _lambda(cfg.options["lambda"], lambda1_fn)
    return Params(lam, cfg.params.mu, cfg.params.N)


def _domain_doc(cfg: RunConfig, grid) -> Dict[str, Any]:
    d = {"kind": cfg.domain.kind, "N": grid.N, "h": grid.h, "dims": list(grid.dims), "n": grid.n,
         "volume": grid.volume}
    if cfg.domain.kind != "mask-file":
        d["extents"] = cfg.domain.extents
        d["resolution"] = cfg.domain.resolution
    return d


def cmd_eigen(cfg: RunConfig) -> Dict[str, Any]:
    grid = _grid(cfg)
    sp = first_eigenpair(grid, tol=_eigen_tol(cfg))
    doc = {"domain": _domain_doc(cfg, grid), "lambda1": sp.lambda1, "residual": sp.residual,
           "iterations": sp.iterations, "tol": _eigen_tol(cfg)}
    write_metadata(cfg.output_dir / "eigen.json", doc, _now())
    print(f"lambda1 = {sp.lambda1:.10g}  (residual {sp.residual:.2e}, {sp.iterations} iterations)")
    return doc


def cmd_solve(cfg: RunConfig) -> Dict[str, Any]:
    grid = _grid(cfg)
    cache = {}

    def eig():
        if "sp" not in cache:
            cache["sp"] = first_eigenpair(grid, tol=_eigen_tol(cfg))
        return cache["sp"]

    p = _resolve_params(cfg, lambda: eig().lambda1)
    method = cfg.options.get("method", "mountain_pass")
    phi1 = eig().phi1 if cfg.solver.initial_direction == "eigenfunction" else None
    if method == "mountain_pass":
        res = mountain_pass_solve(grid, p, cfg.solver, phi1=phi1)
    elif method == "ground_state":
        res = ground_state_search(grid, p, cfg.solver, phi1=phi1)
    else:
        raise UsageError(f"method must be mountain_pass or ground_state, got {method!r}", field="method")
    field_path = cfg.output_dir / "solution.txt"
    write_field(field_path, res.u, N=grid.N, h=grid.h, dims=grid.dims, lam=p.lam, mu=p.mu, level=res.level,
                residual=res.residual, status=res.status)
    doc = {
        "domain": _domain_doc(cfg, grid),
        "params": {"lambda": p.lam, "mu": p.mu, "N": p.N},
        "solver": asdict(cfg.solver),
        "method": method,
        "result": {
            "level": res.level,
            "residual": res.residual,
            "iterations": res.iterations,
            "status": res.status,
            "positive": positivity_check(grid, res.u),
            "nehari_g": res.nehari,
            "threshold": sobolev_closed_form(grid.N) ** (grid.N / 2) / grid.N,
        },
        "field_file": field_path.name,
    }
    write_metadata(cfg.output_dir / "solution.json", doc, _now())
    print(f"{method}: status={res.status} level={res.level:.10g} residual={res.residual:.3e} "
          f"iterations={res.iterations}")
    return doc


def cmd_classify(cfg: RunConfig) -> Dict[str, Any]:
    grid = None
    lam1 = None
    spec = cfg.domain
    if spec.kind == "box":
        lam1 = math.pi**2 * sum(1.0 / L**2 for L in spec.axis_extents())
        vol, rmax = spec.exact_volume(), rho_max(spec)
    else:
        grid = _grid(cfg)
        lam1 = first_eigenpair(grid, tol=_eigen_tol(cfg)).lambda1
        vol = spec.exact_volume() or grid.volume
        rmax = rho_max(spec, grid)
    k = DomainConstants(lambda1=lam1, volume=vol, S=sobolev_closed_form(spec.N), rho_max=rmax, N=spec.N)
    p = _resolve_params(cfg, lambda: k.lambda1)
    v = classify(p, k)
    doc = {"params": {"lambda": p.lam, "mu": p.mu, "N": p.N}, "constants": asdict(k), "label": v.label,
           "basis": v.basis, "margin": v.margin, "curve_values": v.values}
    write_metadata(cfg.output_dir / "classify.json", doc, _now())
    print(f"{v.label}  ({v.basis}; margin {v.margin:.6g})")
    return doc


def _box_constants(spec: DomainSpec) -> DomainConstants:
    lam1 = math.pi**2 * sum(1.0 / L**2 for L in spec.axis_extents())
    return DomainConstants(lambda1=lam1, volume=spec.exact_volume(), S=sobolev_closed_form(spec.N),
                           rho_max=rho_max(spec), N=spec.N)


def cmd_phasediagram(cfg: RunConfig) -> Dict[str, Any]:
    o = cfg.options
    k = _box_constants(cfg.domain) if cfg.domain.kind == "box" else _constants(cfg)
    lam_rng = (_num(o, "lambda_min", float, -10.0), _num(o, "lambda_max", float, k.lambda1))
    mu_rng = (_num(o, "mu_min", float, -8.0), _num(o, "mu_max", float, 2.0))
    res = _num(o, "res", int, 50)
    confirm = o.get("confirm", "false").lower() in ("1", "true", "yes")
    pd = phase_diagram(k, lam_rng, mu_rng, res, confirm=confirm, spec=cfg.domain,
                       budget=_num(o, "budget", int, 4), cfg=cfg.solver, jobs=cfg.jobs)
    pd.to_csv(cfg.output_dir / "phase.csv")
    neg = (min(mu_rng[0], -1e-3), min(mu_rng[1], -1e-3)) if mu_rng[0] < 0 else (-8.0, -1e-3)
    curves = {c: curve_samples(c, neg, k, _num(o, "curve_count", int, 200)) for c in CURVES}
    write_curves_csv(cfg.output_dir / "curves.csv", curves)
    counts = {lab: int(n) for lab, n in zip(*np.unique(pd.labels(), return_counts=True))}
    doc = {"constants": asdict(k), "lambda_range": lam_rng, "mu_range": mu_rng, "res": res, "counts": counts,
           "confirmed": [asdict(c) for c in pd.cells if c.solver_status]}
    write_metadata(cfg.output_dir / "phase.json", doc, _now())
    print(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return doc


def cmd_asymptotics(cfg: RunConfig) -> Dict[str, Any]:
    o = cfg.options
    N = cfg.domain.N
    rho = _num(o, "rho", float, 0.25)
    eps = _floats(o, "eps") if "eps" in o else [0.1, 0.05, 0.025, 0.0125]
    rep = asymptotics_report(CutoffSpec.for_dimension(N, rho), N, eps)
    rep.to_csv(cfg.output_dir / "asymptotics.csv")
    doc = {"N": N, "rho": rho, "eps": eps, "fits": rep.fits, "passes": rep.passes}
    write_metadata(cfg.output_dir / "asymptotics.json", doc, _now())
    for name, ok in sorted(rep.passes.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return doc


def run_verify_suite(grid, spec: Optional[DomainSpec] = None, seed: int = 0) -> Dict[str, bool]:
    """Invariant checks on one grid; returns check name -> passed."""
    rng = np.random.default_rng(seed)
    N = grid.N
    checks: Dict[str, bool] = {}
    x = grid.coordinates()
    torsion = grid.solve(np.ones(grid.n))

    def smooth():
        c = x.min(axis=0) + (x.max(axis=0) - x.min(axis=0)) * rng.uniform(0.3, 0.7, N)
        w = rng.uniform(0.15, 0.4)
        return rng.uniform(0.5, 2.0) * torsion / torsion.max() * np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * w * w))

    u, v = smooth(), smooth()
    a, b = rng.normal(size=2)
    L = lambda f: laplacian_apply(grid, f)
    checks["laplacian_linear"] = bool(np.allclose(L(a * u + b * v), a * L(u) + b * L(v), rtol=1e-12, atol=1e-9))
    s1, s2 = integrate(grid, u * L(v)), integrate(grid, v * L(u))
    checks["laplacian_symmetric"] = abs(s1 - s2) <= 1e-10 * max(abs(s1), 1.0)
    checks["laplacian_positive"] = integrate(grid, u * L(u)) > 0

    worst_grad = 0.0
    worst_g = 0.0
    for lam, mu in ((0.0, 1.0), (5.0, -1.0), (-3.0, 2.0)):
        p = Params(lam, mu, N)
        for _ in range(5):
            u, v = smooth(), smooth() - 0.3 * smooth()
            d = 1e-5
            fd = (energy(grid, p, u + d * v).total - energy(grid, p, u - d * v).total) / (2 * d)
            an = integrate(grid, gradient(grid, p, u) * v)
            worst_grad = max(worst_grad, abs(fd - an) / max(abs(an), 1e-12))
            g1, g2 = nehari_g(grid, p, u), integrate(grid, gradient(grid, p, u) * u)
            worst_g = max(worst_g, abs(g1 - g2) / max(abs(g1), 1e-12))
    checks["gradient_finite_difference"] = worst_grad <= 1e-4
    checks["nehari_identity"] = worst_g <= 1e-8

    sp = first_eigenpair(grid, tol=1e-8)
    checks["eigenfunction_positive"] = bool(np.all(sp.phi1 > 0))
    if spec is not None and spec.kind == "box":
        exact = math.pi**2 * sum(1.0 / L_**2 for L_ in spec.axis_extents())
        checks["eigen_oracle"] = abs(sp.lambda1 / exact - 1) <= 0.02
    ray = integrate(grid, u * L(u)) / integrate(grid, u * u)
    checks["rayleigh_bound"] = ray >= sp.lambda1 * (1 - 1e-6)

    try:
        S = sobolev_constant(N)
        checks["sobolev_scale_invariance"] = abs(S.S / sobolev_closed_form(N) - 1) <= 1e-4
    except AccuracyError:
        checks["sobolev_scale_invariance"] = False
    checks["log_sobolev"] = all(
        log_sobolev_check(grid, f, a_)["holds"] for f in (sp.phi1, smooth()) for a_ in (0.5, 1.0, 2.0)
    )

    lam1 = sp.lambda1
    vol = spec.exact_volume() if spec is not None and spec.exact_volume() else grid.volume
    rmax = rho_max(spec, grid) if spec is not None else 0.5
    k = DomainConstants(lambda1=lam1, volume=vol, S=sobolev_closed_form(N), rho_max=rmax, N=N)
    worst = 0.0
    for c in CURVES:
        for lam_, mu_ in curve_samples(c, (-8.0, -0.05), k, 40):
            worst = max(worst, curve_residual(c, lam_, mu_, k))
    checks["curve_plug_back"] = worst <= 1e-10
    return checks


def cmd_verify(cfg: RunConfig) -> Dict[str, Any]:
    grid = _grid(cfg)
    checks = run_verify_suite(grid, cfg.domain, seed=cfg.seed)
    n_pass = sum(checks.values())
    doc = {"domain": _domain_doc(cfg, grid), "checks": checks, "passed": n_pass, "failed": len(checks) - n_pass}
    write_metadata(cfg.output_dir / "verify.json", doc, _now())
    for name, ok in sorted(checks.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"{n_pass} passed, {len(checks) - n_pass} failed")
    if n_pass != len(checks):
        raise AccuracyError(f"{len(checks) - n_pass} verification check(s) failed")
    return doc


HANDLERS = {
    "eigen": cmd_eigen,
    "solve": cmd_solve,
    "classify": cmd_classify,
    "phasediagram": cmd_phasediagram,
    "asymptotics": cmd_asymptotics,
    "verify": cmd_verify,
}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    HANDLERS[cfg.command](cfg)
    logger.info("%s finished in %.1f s", cfg.command, time.perf_counter() - t0)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logbn", description="Critical elliptic problem with a logarithmic term.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH", help="key = value config file")
    ap.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override one config key")
    ap.add_argument("--output-dir", metavar="DIR", help="output directory (default $LOGBN_OUTPUT_DIR or cwd)")
    ap.add_argument("--jobs", type=int, default=1, help="worker cap for independent solves")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = {}
        if args.config:
            try:
                raw.update(parse_config_text(Path(args.config).read_text()))
            except OSError as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}", field="config") from exc
        raw.update(parse_overrides(args.set))
        cfg = build_config(args.command, raw, output_dir=args.output_dir, jobs=args.jobs)
        return run(cfg)
    except LogBNError as exc:
        field_ = getattr(exc, "field", None)
        where = f" [{field_}]" if field_ else ""
        print(f"logbn: error{where}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
