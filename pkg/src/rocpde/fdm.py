"""Uniform finite-difference discretization of the square [-1, 1]^2.

Nodes are numbered x1-major: node ``(i1, i2)`` has index ``i1 * (K + 1) + i2``,
so a nodal vector reshaped to ``(K + 1, K + 1)`` has axis 0 along x1 and a
fixed-x1 column is a contiguous block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
SIDES = ("x1-", "x1+", "x2-", "x2+")


class InvalidArgument(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    K: int
    h: float
    x1: np.ndarray  # per-node coordinates, length (K+1)^2
    x2: np.ndarray
    node_class: np.ndarray
    bc: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return (self.K + 1) ** 2

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x1, self.x2])

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.K + 1)

    @property
    def dirichlet(self) -> np.ndarray:
        return self.node_class == DIRICHLET

    def index(self, i1, i2):
        return np.asarray(i1) * (self.K + 1) + np.asarray(i2)

    def as_array(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.K + 1, self.K + 1)


def build_grid(K: int, bc: dict | None = None) -> Grid:
    """Tensor grid with K intervals per direction.

    ``bc`` maps each side in ``SIDES`` to ``"dirichlet"`` or ``"neumann"``;
    missing sides default to Dirichlet. Nodes lying on a Dirichlet side are
    Dirichlet (so corners shared with a Neumann side are Dirichlet).
    """
    if int(K) != K or K < 2:
        raise InvalidArgument(f"K must be an integer >= 2, got {K!r}")
    K = int(K)
    bc = {s: "dirichlet" for s in SIDES} | dict(bc or {})
    unknown = set(bc) - set(SIDES)
    if unknown or set(bc.values()) - {"dirichlet", "neumann"}:
        raise InvalidArgument(f"bad boundary specification {bc!r}")

    t = np.linspace(-1.0, 1.0, K + 1)
    X1, X2 = np.meshgrid(t, t, indexing="ij")
    i1, i2 = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    on_side = {
        "x1-": i1 == 0,
        "x1+": i1 == K,
        "x2-": i2 == 0,
        "x2+": i2 == K,
    }
    cls = np.full((K + 1, K + 1), INTERIOR, dtype=np.int8)
    for side, kind in bc.items():
        if kind == "neumann":
            cls[on_side[side]] = NEUMANN
    for side, kind in bc.items():
        if kind == "dirichlet":
            cls[on_side[side]] = DIRICHLET
    return Grid(K, 2.0 / K, X1.ravel(), X2.ravel(), cls.ravel(), bc)


def _second_difference_1d(K: int, h: float, lo: str, hi: str) -> sp.csr_matrix:
    n = K + 1
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    # ghost-point elimination for a zero normal derivative: u_{-1} = u_{1}
    if lo == "neumann":
        upper[0] = 2.0
    else:
        main[0] = upper[0] = 0.0
    if hi == "neumann":
        lower[-1] = 2.0
    else:
        main[-1] = lower[-1] = 0.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def _first_difference_1d(K: int, h: float) -> sp.csr_matrix:
    n = K + 1
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5
        D[i, i + 1] = 0.5
    D[0, :3] = [-1.5, 2.0, -0.5]
    D[n - 1, n - 3:] = [0.5, -2.0, 1.5]
    return D.tocsr() / h


def assemble_laplacian(grid: Grid) -> sp.csr_matrix:
    """Five-point Laplacian; Neumann rows use ghost points, Dirichlet rows are identity."""
    K, h, bc = grid.K, grid.h, grid.bc
    I = sp.identity(K + 1, format="csr")
    L1 = _second_difference_1d(K, h, bc["x1-"], bc["x1+"])
    L2 = _second_difference_1d(K, h, bc["x2-"], bc["x2+"])
    L = sp.kron(L1, I) + sp.kron(I, L2)
    keep = (~grid.dirichlet).astype(float)
    L = sp.diags(keep) @ L + sp.diags(1.0 - keep)
    L = L.tocsr()
    L.eliminate_zeros()
    return L


def assemble_gradient(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Central differences inside, one-sided second order on the edges."""
    I = sp.identity(grid.K + 1, format="csr")
    D = _first_difference_1d(grid.K, grid.h)
    return sp.kron(D, I, format="csr"), sp.kron(I, D, format="csr")


def restrict(values: np.ndarray, indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    n = np.shape(values)[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InvalidArgument(f"index out of range for field of length {n}")
    return np.asarray(values)[idx]


@dataclass(frozen=True, eq=False)
class Operators:
    """Per-grid operator bundle; cheap to share between solves."""

    grid: Grid
    laplacian: sp.csr_matrix
    dx1: sp.csr_matrix
    dx2: sp.csr_matrix

    @classmethod
    def build(cls, grid: Grid) -> "Operators":
        dx1, dx2 = assemble_gradient(grid)
        return cls(grid, assemble_laplacian(grid), dx1, dx2)
