"""Solution field files and their JSON metadata sidecars.

A field file is plain text. The first line is

    N h dim1 ... dimN lambda mu level residual status

and every following line holds one value, interior points in grid order.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .domain import check_dimension
from .errors import UsageError

PathLike = Union[str, Path]


def write_field(path: PathLike, u, *, N: int, h: float, dims, lam: float = float("nan"), mu: float = float("nan"),
                level: float = float("nan"), residual: float = float("nan"), status: str = "none") -> None:
    u = np.asarray(u, dtype=float).ravel()
    if len(dims) != N:
        raise UsageError(f"dims has {len(dims)} entries for N={N}", field="dims")
    if not status or any(c.isspace() for c in status):
        raise UsageError("status must be a single non-empty token", field="status")
    head = [str(N), repr(float(h))] + [str(int(d)) for d in dims]
    head += [repr(float(lam)), repr(float(mu)), repr(float(level)), repr(float(residual)), status]
    with open(path, "w") as fh:
        fh.write(" ".join(head) + "\n")
        np.savetxt(fh, u, fmt="%.17g")


def read_field(path: PathLike) -> Tuple[np.ndarray, Dict[str, Any]]:
    with open(path) as fh:
        first = fh.readline().split()
        try:
            N = check_dimension(int(first[0]))
            if len(first) != N + 7:
                raise ValueError(f"header has {len(first)} tokens, expected {N + 7}")
            meta = {
                "N": N,
                "h": float(first[1]),
                "dims": tuple(int(t) for t in first[2 : 2 + N]),
                "lambda": float(first[2 + N]),
                "mu": float(first[3 + N]),
                "level": float(first[4 + N]),
                "residual": float(first[5 + N]),
                "status": first[6 + N],
            }
        except (ValueError, IndexError) as exc:
            raise UsageError(f"malformed field file {path}: {exc}", field="path") from exc
        u = np.loadtxt(fh, dtype=float, ndmin=1)
    return u, meta


def _plain(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def write_metadata(path: PathLike, data: Dict[str, Any], timestamp: Optional[str] = None) -> None:
    """Sorted-key JSON; the only run-dependent value is the top-level ``timestamp``."""
    doc = {"data": _plain(data), "timestamp": timestamp}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_metadata(path: PathLike) -> Dict[str, Any]:
    doc = json.loads(Path(path).read_text())
    if "data" not in doc:
        raise UsageError(f"{path} is not a metadata document", field="path")
    return doc
