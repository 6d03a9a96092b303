"""Masked uniform grids, the discrete Dirichlet Laplacian and midpoint quadrature.

A field is a 1-d float array holding one value per interior grid point, in
lexicographic (C) order of the full node array. Points outside the mask are
Dirichlet boundary points and carry the value 0 implicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import DegenerateDomainError, ShapeError, UnsupportedDimensionError, UsageError

logger = logging.getLogger(__name__)

SUPPORTED_DIMENSIONS = (3, 4, 5)
DOMAIN_KINDS = ("box", "ball", "mask-file")


def check_dimension(N) -> int:
    if int(N) != N or int(N) not in SUPPORTED_DIMENSIONS:
        raise UnsupportedDimensionError(f"dimension N={N!r} not in {SUPPORTED_DIMENSIONS}", field="N")
    return int(N)


@dataclass(frozen=True)
class DomainSpec:
    """Description of a bounded domain.

    ``extents`` holds per-axis lengths for a box (a single number means a cube)
    and the radius for a ball. Mask-file domains take ``N``, ``h`` and the mask
    from ``path``; ``resolution`` is then ignored.
    """

    kind: str = "box"
    N: int = 3
    extents: Union[float, Tuple[float, ...]] = 1.0
    resolution: int = 32
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise UsageError(f"unknown domain kind {self.kind!r}", field="kind")
        if self.kind == "mask-file":
            if not self.path:
                raise UsageError("mask-file domain needs a path", field="path")
            return
        check_dimension(self.N)
        ext = self.axis_extents()
        if any(not (e > 0) or not math.isfinite(e) for e in ext):
            raise UsageError(f"extents must be positive, got {self.extents!r}", field="extents")
        if self.resolution < 1:
            raise UsageError("resolution must be a positive integer", field="resolution")

    def axis_extents(self) -> Tuple[float, ...]:
        if self.kind == "ball":
            r = float(np.ravel(self.extents)[0])
            return (2.0 * r,) * int(self.N)
        ext = tuple(float(e) for e in np.ravel(self.extents))
        if len(ext) == 1:
            ext = ext * int(self.N)
        if len(ext) != self.N:
            raise UsageError(f"box needs {self.N} extents, got {len(ext)}", field="extents")
        return ext

    @property
    def radius(self) -> float:
        return float(np.ravel(self.extents)[0])

    def exact_volume(self) -> Optional[float]:
        """|Omega| from the analytic shape; None for mask domains."""
        if self.kind == "box":
            return float(np.prod(self.axis_extents()))
        if self.kind == "ball":
            n = self.N
            return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n
        return None


class Grid:
    """Uniform node array with an interior mask.

    Attributes
    ----------
    h : float
        Grid spacing.
    dims : tuple of int
        Node counts per axis (boundary layer included).
    mask : ndarray of bool, shape ``dims``
        True at interior points.
    interior : ndarray of int
        Flat (C-order) indices of interior points; defines field ordering.
    origin : ndarray
        Coordinates of node ``(0, ..., 0)``.
    volume : float
        ``h**N`` per interior point, unless the caller supplies the measure
        (box grids have their boundary nodes exactly on the boundary, so the
        trapezoid weights give the extent product).
    """

    def __init__(
        self,
        h: float,
        mask: np.ndarray,
        origin: Optional[Sequence[float]] = None,
        kind: str = "mask-file",
        volume: Optional[float] = None,
    ):
        mask = np.asarray(mask, dtype=bool)
        self.N = check_dimension(mask.ndim)
        self.h = float(h)
        self.kind = kind
        # out-of-array neighbours are treated as boundary, so pad once here
        if _touches_edge(mask):
            mask = np.pad(mask, 1)
            if origin is not None:
                origin = np.asarray(origin, dtype=float) - self.h
        self.mask = mask
        self.dims = tuple(mask.shape)
        self.origin = np.zeros(self.N) if origin is None else np.asarray(origin, dtype=float)
        self.interior = np.flatnonzero(mask.ravel())
        if self.interior.size == 0:
            raise DegenerateDomainError("domain has no interior points (resolution too coarse)")
        self.n = int(self.interior.size)
        self.cell = self.h**self.N
        self.volume = float(volume) if volume is not None else self.cell * self.n

    def __repr__(self):
        return f"Grid(kind={self.kind!r}, N={self.N}, h={self.h:g}, dims={self.dims}, n={self.n})"

    @cached_property
    def _neighbours(self):
        """Per axis and sign, the field index of each point's neighbour (-1 for boundary)."""
        idx = np.full(self.dims, -1, dtype=np.int64)
        idx.ravel()[self.interior] = np.arange(self.n)
        padded = np.pad(idx, 1, constant_values=-1)
        coords = np.array(np.unravel_index(self.interior, self.dims)) + 1
        out = []
        for k in range(self.N):
            for s in (-1, 1):
                c = coords.copy()
                c[k] += s
                out.append(padded[tuple(c)])
        return out

    @cached_property
    def is_box(self) -> bool:
        """True when the interior is a full rectangular block (DST solves apply)."""
        return self.n == int(np.prod([d - 2 for d in self.dims])) and bool(
            self.mask[(slice(1, -1),) * self.N].all()
        )

    @cached_property
    def block_shape(self) -> Tuple[int, ...]:
        return tuple(d - 2 for d in self.dims)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Sparse ``-Delta_h`` on the interior, 2N+1 point stencil."""
        rows = [np.arange(self.n)]
        cols = [np.arange(self.n)]
        vals = [np.full(self.n, 2.0 * self.N)]
        for nb in self._neighbours:
            ok = nb >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(nb[ok])
            vals.append(-np.ones(int(ok.sum())))
        A = sp.coo_matrix(
            (np.concatenate(vals) / self.h**2, (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n),
        )
        return A.tocsr()

    @cached_property
    def _dst_symbol(self) -> np.ndarray:
        sym = np.zeros(self.block_shape)
        for k, m in enumerate(self.block_shape):
            j = np.arange(1, m + 1)
            lam = 4.0 * np.sin(j * np.pi / (2 * (m + 1))) ** 2 / self.h**2
            shape = [1] * self.N
            shape[k] = m
            sym = sym + lam.reshape(shape)
        return sym

    def coordinates(self) -> np.ndarray:
        """Interior point coordinates, shape (n, N)."""
        c = np.array(np.unravel_index(self.interior, self.dims), dtype=float).T
        return self.origin + self.h * c

    def center(self) -> np.ndarray:
        """Geometric center of the interior points."""
        return self.coordinates().mean(axis=0)

    def to_full(self, u: np.ndarray) -> np.ndarray:
        full = np.zeros(self.dims)
        full.ravel()[self.interior] = check_field(self, u)
        return full

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n)

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x)`` with ``x`` of shape (n, N) on interior points."""
        return np.asarray(func(self.coordinates()), dtype=float).reshape(self.n)

    def solve(self, f: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
        """Solve ``-Delta_h u = f`` with zero Dirichlet data.

        Box interiors use an exact DST-I diagonalisation; other masks fall back
        to conjugate gradients.
        """
        f = check_field(self, f)
        if self.is_box:
            fh = scipy.fft.dstn(f.reshape(self.block_shape), type=1)
            return scipy.fft.idstn(fh / self._dst_symbol, type=1).ravel()
        u, info = spla.cg(self.matrix, f, rtol=rtol, atol=0.0, maxiter=20 * self.n)
        if info != 0:
            logger.warning("Poisson CG solve stopped early (info=%d)", info)
        return u


def _touches_edge(mask: np.ndarray) -> bool:
    for k in range(mask.ndim):
        if np.take(mask, 0, axis=k).any() or np.take(mask, -1, axis=k).any():
            return True
    return False


def check_field(grid: Grid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise ShapeError(f"field has shape {u.shape}, grid expects ({grid.n},)")
    return u


def build_grid(spec: DomainSpec) -> Grid:
    """Build the masked grid for ``spec``; deterministic for a fixed spec."""
    if spec.kind == "mask-file":
        return read_mask_file(spec.path)
    h = 1.0 / spec.resolution
    N = spec.N
    if spec.kind == "box":
        counts = []
        for L in spec.axis_extents():
            m = int(round(L / h))
            if abs(m * h - L) > 1e-9 * max(L, 1.0):
                logger.warning("extent %g is not a multiple of h=%g; using %g", L, h, m * h)
            counts.append(m + 1)
        if min(counts) < 3:
            raise DegenerateDomainError(f"box at resolution {spec.resolution} has no interior points")
        mask = np.zeros(counts, dtype=bool)
        mask[(slice(1, -1),) * N] = True
        volume = float(np.prod([(c - 1) * h for c in counts]))
        return Grid(h, mask, origin=np.zeros(N), kind="box", volume=volume)
    # ball: staircase mask, centre strictly inside
    r = spec.radius
    m = int(math.floor(r / h)) + 1
    x = (np.arange(2 * m + 1) - m) * h
    r2 = np.zeros((2 * m + 1,) * N)
    for k in range(N):
        shape = [1] * N
        shape[k] = -1
        r2 = r2 + x.reshape(shape) ** 2
    mask = r2 < r * r * (1 - 1e-12)
    if not mask.any():
        raise DegenerateDomainError(f"ball at resolution {spec.resolution} has no interior points")
    return Grid(h, mask, origin=np.full(N, -m * h), kind="ball")


def laplacian_apply(grid: Grid, u) -> np.ndarray:
    """Return ``-Delta_h u`` with zero boundary values."""
    return grid.matrix @ check_field(grid, u)


def integrate(grid: Grid, v) -> float:
    """Midpoint quadrature: ``sum(v) * h**N`` over interior points."""
    return float(np.sum(check_field(grid, v)) * grid.cell)


def l2_norm(grid: Grid, v) -> float:
    v = check_field(grid, v)
    return math.sqrt(float(v @ v) * grid.cell)


def dirichlet_norm_sq(grid: Grid, u) -> float:
    """``int |grad u|^2`` computed as ``integrate(u * L u)``."""
    u = check_field(grid, u)
    return float(u @ (grid.matrix @ u)) * grid.cell


def rho_max(spec: DomainSpec, grid: Optional[Grid] = None) -> float:
    """Inradius: half the smallest box extent, the ball radius, or a distance-transform maximum."""
    if spec.kind == "box":
        return 0.5 * min(spec.axis_extents())
    if spec.kind == "ball":
        return spec.radius
    grid = grid if grid is not None else build_grid(spec)
    return mask_inradius(grid)


def mask_inradius(grid: Grid) -> float:
    dist = ndimage.distance_transform_edt(grid.mask)
    return float(dist.max()) * grid.h


# -- mask file format ---------------------------------------------------------
# header line "N h dim1 ... dimN", then one 0/1 flag per node in C order


def read_mask_file(path: Union[str, Path]) -> Grid:
    text = Path(path).read_text().split()
    if not text:
        raise UsageError(f"mask file {path} is empty", field="path")
    try:
        N = check_dimension(int(text[0]))
        h = float(text[1])
        dims = tuple(int(t) for t in text[2 : 2 + N])
        flags = np.array([int(t) for t in text[2 + N :]], dtype=np.int8)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"malformed mask file {path}: {exc}", field="path") from exc
    if flags.size != int(np.prod(dims)):
        raise UsageError(f"mask file {path}: expected {int(np.prod(dims))} flags, found {flags.size}", field="path")
    if not np.isin(flags, (0, 1)).all():
        raise UsageError(f"mask file {path}: flags must be 0 or 1", field="path")
    return Grid(h, flags.reshape(dims).astype(bool), kind="mask-file")


def write_mask_file(path: Union[str, Path], grid: Grid) -> None:
    header = " ".join([str(grid.N), repr(grid.h)] + [str(d) for d in grid.dims])
    flags = grid.mask.ravel().astype(np.int8)
    lines = [header]
    row = grid.dims[-1]
    for i in range(0, flags.size, row):
        lines.append(" ".join(map(str, flags[i : i + row])))
    Path(path).write_text("\n".join(lines) + "\n")
