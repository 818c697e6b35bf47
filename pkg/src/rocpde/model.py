"""The reduced model container, its on-disk format, and the greedy trace CSV."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .problems import Problem, get_problem

FORMAT_VERSION = 1
_ARRAYS = ("mu", "W", "R", "xs", "xr", "xm", "WM", "LM", "GxM", "GyM", "fM", "pM", "dM", "residual_interp")


@dataclass(eq=False)
class ReducedModel:
    """Snapshots, EIM-normalized basis and everything restricted to the collocation set.

    ``W @ R`` reproduces the raw snapshots (``R`` is upper triangular).
    ``xs[k]`` is the solution-track point of basis k; ``xr[k]`` is the
    residual-track point added together with basis k + 1. ``xm`` lists the
    union of both tracks in the order points were added, duplicates kept
    once, so rows for the first n bases form a prefix of ``xm``. Rows at
    Dirichlet nodes enforce the boundary datum instead of the PDE.
    """

    problem: Problem
    K: int
    mu: np.ndarray
    W: np.ndarray
    R: np.ndarray
    xs: np.ndarray
    xr: np.ndarray
    xm: np.ndarray
    WM: np.ndarray
    LM: np.ndarray
    GxM: np.ndarray
    GyM: np.ndarray
    fM: np.ndarray
    pM: np.ndarray  # coordinates of the xm nodes
    dM: np.ndarray  # 1 where the xm node carries a Dirichlet condition
    residual_interp: np.ndarray
    seed: int | None = None
    indicator: str = ""
    meta: dict = field(default_factory=dict)
    _rows: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.W.shape[1]

    @property
    def M(self) -> int:
        return len(self.xm)

    def rows(self, n: int, square: bool = False) -> np.ndarray:
        """Positions in ``xm`` of the collocation set used with n bases."""
        key = (n, square)
        if key not in self._rows:
            pts = list(self.xs[:n]) if square else list(self.xs[:n]) + list(self.xr[: n - 1])
            pos = {int(x): i for i, x in enumerate(self.xm)}
            self._rows[key] = np.array(sorted({pos[int(p)] for p in pts}), dtype=np.int64)
        return self._rows[key]

    def snapshot_coordinates(self, c: np.ndarray) -> np.ndarray:
        """Coefficients of ``W[:, :n] @ c`` in the raw-snapshot basis."""
        n = len(c)
        return solve_triangular(self.R[:n, :n], c, lower=False)

    def header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "problem": self.problem.name,
            "problem_options": _problem_options(self.problem),
            "K": self.K,
            "N": self.N,
            "M": self.M,
            "seed": self.seed,
            "indicator": self.indicator,
            "byteorder": "little",
            "meta": self.meta,
        }


def _problem_options(problem):
    opts = {}
    if hasattr(problem, "source_scale"):
        opts["source_scale"] = problem.source_scale
    return opts


def save_model(model: ReducedModel, path) -> Path:
    """Write ``model`` as an ``.npz`` archive of little-endian, C-ordered float64/int64 arrays."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name in _ARRAYS:
        a = np.asarray(getattr(model, name))
        dt = "<i8" if a.dtype.kind in "iu" else "<f8"
        arrays[name] = np.ascontiguousarray(a, dtype=dt)
    header = json.dumps(model.header(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(header, dtype=np.uint8), **arrays)
    return path


def load_model(path) -> ReducedModel:
    with np.load(Path(path)) as z:
        header = json.loads(z["header"].tobytes().decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {header.get('format_version')!r}")
        if header.get("byteorder") != "little":
            raise ValueError("model file byte order marker missing or unsupported")
        arrays = {name: z[name] for name in _ARRAYS}
    problem = get_problem(header["problem"], **header.get("problem_options", {}))
    return ReducedModel(problem=problem, K=header["K"], seed=header["seed"],
                        indicator=header["indicator"], meta=header.get("meta", {}), **arrays)


@dataclass
class TraceRow:
    n: int
    mu1: float
    mu2: float
    indicator_value: float
    x_star_index: int
    x_starstar_index: int
    cum_offline_seconds: float


@dataclass
class GreedyTrace:
    rows: list = field(default_factory=list)
    stop_reason: str = ""
    sweep_failures: int = 0
    truth_seconds: float = 0.0
    indicator_fields: list = field(default_factory=list)
    warm_start: bool = False

    @property
    def selected(self) -> np.ndarray:
        return np.array([[r.mu1, r.mu2] for r in self.rows])


TRACE_COLUMNS = ["n", "mu1", "mu2", "indicator_value", "x_star_index", "x_starstar_index",
                 "cum_offline_seconds"]


def fmt(x) -> str:
    """Float to text with 17 significant digits; ints pass through."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (int, float, np.integer, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv`, numbers parsed back to int/float."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        columns = next(r)
        rows = [[_parse(v) for v in row] for row in r]
    return columns, rows


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def write_trace(trace: GreedyTrace, path) -> Path:
    rows = [[r.n, r.mu1, r.mu2, r.indicator_value, r.x_star_index, r.x_starstar_index,
             r.cum_offline_seconds] for r in trace.rows]
    return write_csv(path, TRACE_COLUMNS, rows)


def read_trace(path) -> GreedyTrace:
    columns, rows = read_csv(path)
    if columns != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace columns {columns}")
    return GreedyTrace(rows=[TraceRow(int(a), float(b), float(c), float(d), int(e), int(f), float(g))
                             for a, b, c, d, e, f, g in rows])
