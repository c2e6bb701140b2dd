"""Uniform interior-node lattice on a rectangle with zero boundary values.

Unknowns live at interior nodes only: node (i, j) sits at
((i + 1) * hx, (j + 1) * hy) with hx = Lx / (nx + 1), hy = Ly / (ny + 1),
flattened row-major with i fastest.  Boundary values are identically zero
and enter the stencils as zero ghosts.

Operator conventions:

* first derivatives are central differences, hence skew-symmetric as
  matrices: D^T = -D;
* ``div`` is minus the adjoint of ``grad``, which for this pairing is again
  the central difference sum;
* the evolution operator builds its second derivatives by composing the
  central differences (see dynamics), which buys exact summation-by-parts
  closures at the price of a wide stencil;
* the compact 5-point Laplacian and the odd-reflection wide stencils kept
  here serve the spectral diagnostics, where the composites' near-zero
  stiffness on sawtooth fields would pollute the bottom of the spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


class GridMismatch(ValueError):
    """Fields defined on different grids were combined."""


class IndexOutOfRange(IndexError):
    """A row or node index is outside the lattice."""


@dataclass(frozen=True)
class Grid:
    Lx: float
    Ly: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if not (self.Lx > 0.0 and self.Ly > 0.0):
            raise ValueError(f"side lengths must be positive, got {self.Lx}, {self.Ly}")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 nodes per direction, got {self.nx}x{self.ny}")

    @property
    def hx(self) -> float:
        return self.Lx / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.Ly / (self.ny + 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def x1_coords(self) -> np.ndarray:
        return self.hx * np.arange(1, self.nx + 1)

    def x2_coords(self) -> np.ndarray:
        return self.hy * np.arange(1, self.ny + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays of shape (ny, nx): X1[j, i], X2[j, i]."""
        X1, X2 = np.meshgrid(self.x1_coords(), self.x2_coords())
        return X1, X2


@dataclass
class Field:
    """Scalar field sampled at the interior nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.n_nodes:
            raise ValueError(
                f"field length {self.values.size} does not match grid "
                f"with {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def as_rows(self) -> np.ndarray:
        """View of shape (ny, nx); entry [j, i] is the node (i, j) value."""
        return self.values.reshape(self.grid.ny, self.grid.nx)


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.n_nodes))


def field_from_function(grid: Grid, fn) -> Field:
    X1, X2 = grid.mesh()
    return Field(grid, np.asarray(fn(X1, X2), dtype=float).ravel())


def _central_difference(n: int, h: float) -> sp.csr_matrix:
    # zero ghosts drop the boundary terms, leaving an exactly
    # skew-symmetric matrix
    e = np.ones(n - 1) / (2.0 * h)
    return sp.diags([e, -e], [1, -1], format="csr")


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0 / h**2)
    off = np.ones(n - 1) / h**2
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@lru_cache(maxsize=32)
def d_x1_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse central difference along x1 (skew-symmetric)."""
    return sp.kron(sp.eye(grid.ny), _central_difference(grid.nx, grid.hx), format="csr")


@lru_cache(maxsize=32)
def d_x2_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse central difference along x2 (skew-symmetric)."""
    return sp.kron(_central_difference(grid.ny, grid.hy), sp.eye(grid.nx), format="csr")


@lru_cache(maxsize=32)
def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse 5-point Laplacian (symmetric, negative definite)."""
    Lx = sp.kron(sp.eye(grid.ny), _second_difference(grid.nx, grid.hx))
    Ly = sp.kron(_second_difference(grid.ny, grid.hy), sp.eye(grid.nx))
    return (Lx + Ly).tocsr()


@lru_cache(maxsize=32)
def stiffness_matrix(grid: Grid) -> sp.csr_matrix:
    """Minus the 5-point Laplacian; symmetric positive definite."""
    return (-laplacian_matrix(grid)).tocsr()


def _wide_second_difference(n: int, h: float) -> sp.csr_matrix:
    """Composition of the central difference with itself, closed at the ends.

    The +-2h stencil of d@d reaches one node past the boundary; closing it
    by odd reflection (ghost value -f at the first interior node) keeps the
    matrix symmetric, keeps -T positive semidefinite, and is exact for the
    sine modes the zero-boundary problem is built from.
    """
    # d@d's end rows lose both ghost contributions: the true +-2h stencil at
    # the first node is (f2 - 2 f0 + f(-h))/4h^2 and odd reflection sends
    # f(-h) -> -f0, while the raw product gives (f2 - f0)/4h^2.
    d = _central_difference(n, h)
    T = (d @ d).tolil()
    corr = -2.0 / (4.0 * h * h)
    T[0, 0] += corr
    T[n - 1, n - 1] += corr
    return T.tocsr()


@lru_cache(maxsize=32)
def dd_x1_matrix(grid: Grid) -> sp.csr_matrix:
    """Wide centered second difference along x1 with odd-reflection closure."""
    return sp.kron(sp.eye(grid.ny), _wide_second_difference(grid.nx, grid.hx), format="csr")


@lru_cache(maxsize=32)
def dd_x2_matrix(grid: Grid) -> sp.csr_matrix:
    """Wide centered second difference along x2 with odd-reflection closure."""
    return sp.kron(_wide_second_difference(grid.ny, grid.hy), sp.eye(grid.nx), format="csr")


def _same_grid(*fields: Field) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"fields live on different grids: {f.grid} vs {g}")
    return g


def grad(f: Field) -> tuple[Field, Field]:
    g = f.grid
    return (
        Field(g, d_x1_matrix(g) @ f.values),
        Field(g, d_x2_matrix(g) @ f.values),
    )


def div(g1: Field, g2: Field) -> Field:
    g = _same_grid(g1, g2)
    return Field(g, d_x1_matrix(g) @ g1.values + d_x2_matrix(g) @ g2.values)


def laplacian(f: Field) -> Field:
    return Field(f.grid, laplacian_matrix(f.grid) @ f.values)


def inner(f: Field, g: Field) -> float:
    """Discrete L2 pairing: cell_area * sum(f * g)."""
    grid = _same_grid(f, g)
    return float(grid.cell_area * np.dot(f.values, g.values))


def norm(f: Field) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def cross_section_sum(f: Field, j: int) -> float:
    """Line quadrature hx * sum_i f[i, j] along the row x2 = (j+1)*hy."""
    if not 0 <= j < f.grid.ny:
        raise IndexOutOfRange(f"row index {j} outside 0..{f.grid.ny - 1}")
    return float(f.grid.hx * f.as_rows()[j, :].sum())


def row_sums(values: np.ndarray, grid: Grid) -> np.ndarray:
    """cross_section_sum for every row at once; values has grid length."""
    return grid.hx * values.reshape(grid.ny, grid.nx).sum(axis=1)


def write_field_csv(f: Field, path) -> None:
    """Write ``i,j,x1,x2,value`` rows in storage (row-major) order.

    Floats are rendered with repr, the shortest decimal that round-trips.
    """
    g = f.grid
    x1, x2 = g.x1_coords(), g.x2_coords()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,j,x1,x2,value\n")
        vals = f.values
        for k in range(g.n_nodes):
            j, i = divmod(k, g.nx)
            fh.write(
                f"{i},{j},{float(x1[i])!r},{float(x2[j])!r},{float(vals[k])!r}\n"
            )
