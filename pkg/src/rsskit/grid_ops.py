"""Grids and finite-difference operators.

Two families of 1D operators live here:

* compact fourth-order schemes ``P v = Q u`` for the first derivative and for
  ``-d^2/dx^2`` (Dirichlet and Neumann closures), applied by a banded solve
  with ``P`` and never by forming ``P^{-1}``;
* explicit second-order operators (sparse), used as preconditioners and for
  the frozen-velocity convection operator.

Multi-dimensional operators are Kronecker sums of 1D factors applied
matrix-free along array axes.  Fields are stored as arrays of shape
``(ny, nx)`` (or ``(nz, ny, nx)``); flattening in C order makes ``x`` the
fastest index, which is the ordering used by every vector in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, GridTooSmall
from .solvers import BandedFactorization, banded_factor

__all__ = [
    "Grid1D",
    "Grid2D",
    "Grid3D",
    "CompactOperator",
    "SparseOperator",
    "KronSumOperator",
    "AxisOperator",
    "D1_BOUNDARY",
    "D2_DIRICHLET_BOUNDARY",
    "D2_NEUMANN_BOUNDARY",
    "build_compact_d1",
    "build_compact_d2",
    "build_fd2_d1",
    "build_fd2_d2",
    "kron_sum_2d",
    "kron_sum_3d",
    "dense_kron_sum",
    "apply",
]

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# Boundary-row coefficients of the compact closures, as rationals.
D1_BOUNDARY = (Fraction(-2), Fraction(3), Fraction(-2, 3), Fraction(1, 8))
D2_DIRICHLET_BOUNDARY = (
    Fraction(-67, 60),
    Fraction(-7, 12),
    Fraction(13, 10),
    Fraction(-61, 120),
    Fraction(1, 12),
)
D2_NEUMANN_BOUNDARY = (
    Fraction(2681, 480),
    Fraction(-32, 3),
    Fraction(113, 40),
    Fraction(-13, 15),
    Fraction(59, 480),
)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid1D:
    """``n`` interior nodes ``x_i = i*h``; by default ``h = length/(n+1)``."""

    n: int
    h: Optional[float] = None
    bc: str = DIRICHLET
    length: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise GridTooSmall(f"need at least one interior point, got n={self.n}")
        if self.h is None:
            object.__setattr__(self, "h", self.length / (self.n + 1))
        if self.h <= 0:
            raise ValueError("mesh width must be positive")
        if self.bc not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @property
    def shape(self) -> tuple[int]:
        return (self.n,)

    @property
    def axes(self) -> tuple["Grid1D"]:
        return (self,)

    @property
    def size(self) -> int:
        return self.n


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid; fields have shape ``(gy.n, gx.n)`` with x fastest."""

    gx: Grid1D
    gy: Grid1D

    @classmethod
    def square(cls, n: int, bc: str = DIRICHLET) -> "Grid2D":
        g = Grid1D(n, bc=bc)
        return cls(g, g)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gy.n, self.gx.n)

    @property
    def axes(self) -> tuple[Grid1D, Grid1D]:
        return (self.gy, self.gx)

    @property
    def size(self) -> int:
        return self.gx.n * self.gy.n

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(X, Y)``, each of shape ``self.shape``."""
        return np.meshgrid(self.gx.nodes, self.gy.nodes, indexing="xy")


@dataclass(frozen=True)
class Grid3D:
    gx: Grid1D
    gy: Grid1D
    gz: Grid1D

    @classmethod
    def cube(cls, n: int) -> "Grid3D":
        g = Grid1D(n)
        return cls(g, g, g)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.gz.n, self.gy.n, self.gx.n)

    @property
    def axes(self) -> tuple[Grid1D, Grid1D, Grid1D]:
        return (self.gz, self.gy, self.gx)

    @property
    def size(self) -> int:
        return self.gx.n * self.gy.n * self.gz.n

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        Z, Y, X = np.meshgrid(self.gz.nodes, self.gy.nodes, self.gx.nodes, indexing="ij")
        return X, Y, Z


# ---------------------------------------------------------------------------
# 1D operators


def _along(u: np.ndarray, axis: int, n: int) -> tuple[np.ndarray, tuple]:
    if u.shape[axis] != n:
        raise DimensionMismatch(f"axis {axis} has length {u.shape[axis]}, operator has {n}")
    U = np.moveaxis(u, axis, 0)
    return U.reshape(n, -1), U.shape


@dataclass(frozen=True, eq=False)
class CompactOperator:
    """Implicit operator ``P^{-1} Q`` on a 1D grid.

    ``wall_left``/``wall_right`` hold the weight of a prescribed boundary
    value in the first/last row of ``Q``; they let the same operator act on
    data with non-homogeneous Dirichlet values (``left``/``right`` arguments
    of :meth:`apply`).  ``approximates`` records the sign convention.
    """

    P: sp.csr_matrix
    Q: sp.csr_matrix
    h: float
    derivative_order: int
    bc: str
    approximates: str
    boundary_coefficients: tuple
    wall_left: float = 0.0
    wall_right: float = 0.0
    accuracy: int = 4
    _pfac: BandedFactorization = field(default=None, repr=False)

    def __post_init__(self):
        if self._pfac is None:
            object.__setattr__(self, "_pfac", banded_factor(self.P, 1, 1))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def apply(self, u: np.ndarray, axis: int = 0, left=None, right=None) -> np.ndarray:
        """Solve ``P v = Q u (+ wall terms)`` along ``axis`` of ``u``."""
        u = np.asarray(u, dtype=float)
        U2, mshape = _along(u, axis, self.n)
        R = self.Q @ U2
        if left is not None:
            R[0] += self.wall_left * np.ravel(left)
        if right is not None:
            R[-1] += self.wall_right * np.ravel(right)
        V = self._pfac.solve(R)
        return np.moveaxis(V.reshape(mshape), 0, axis)

    def to_dense(self) -> np.ndarray:
        return self._pfac.solve(self.Q.toarray())

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=lambda v: self.apply(np.ravel(v)), dtype=float)

    def __matmul__(self, u):
        return self.apply(u)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Explicit banded operator stored as a CSR matrix."""

    matrix: sp.csr_matrix
    h: float
    symmetric: bool
    approximates: str
    bc: str = DIRICHLET

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def bands(self) -> dict[int, np.ndarray]:
        m = self.matrix.todia()
        return {int(k): m.diagonal(k) for k in m.offsets}

    def apply(self, u: np.ndarray, axis: int = 0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        U2, mshape = _along(u, axis, self.n)
        return np.moveaxis((self.matrix @ U2).reshape(mshape), 0, axis)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.aslinearoperator(self.matrix)

    def __matmul__(self, u):
        return self.apply(u)


def _tridiag(n: int, lo: float, d: float, up: float) -> sp.lil_matrix:
    return sp.diags([np.full(n - 1, lo), np.full(n, d), np.full(n - 1, up)], [-1, 0, 1], format="lil")


def build_compact_d1(grid: Grid1D) -> CompactOperator:
    """Fourth-order compact ``d/dx`` for data vanishing at both ends.

    ``P = tridiag(1/4, 1, 1/4)``; interior rows of ``Q`` are
    ``(-3/2, 0, 3/2)/(2h)``; the first row is ``(-2, 3, -2/3, 1/8)/(2h)`` and the
    last row its antisymmetric mirror.  The rows are exact on polynomials of
    degree <= 4 that vanish on the boundary, and a wall value enters the first
    row with weight ``-11/24 / (2h)`` (makes constants exact).
    """
    n, h = grid.n, grid.h
    if n < 4:
        raise GridTooSmall(f"compact d1 needs n >= 4, got {n}")
    P = _tridiag(n, 0.25, 1.0, 0.25)
    Q = _tridiag(n, -1.5, 0.0, 1.5)
    a = [float(c) for c in D1_BOUNDARY]
    Q[0, :] = 0.0
    Q[-1, :] = 0.0
    Q[0, 0:4] = a
    Q[-1, n - 4 :] = [-c for c in reversed(a)]
    Q = Q.tocsr() / (2 * h)
    wall = -float(sum(D1_BOUNDARY)) / (2 * h)
    return CompactOperator(
        P=P.tocsr(),
        Q=Q,
        h=h,
        derivative_order=1,
        bc=DIRICHLET,
        approximates="+d/dx",
        boundary_coefficients=D1_BOUNDARY,
        wall_left=wall,
        wall_right=-wall,
    )


def build_compact_d2(grid: Grid1D) -> CompactOperator:
    """Fourth-order compact ``-d^2/dx^2``.

    ``P = tridiag(1/10, 1, 1/10)`` and interior rows of ``Q`` are
    ``(-6/5, 12/5, -6/5)/h^2``.  The tabulated boundary coefficients
    (``D2_DIRICHLET_BOUNDARY`` / ``D2_NEUMANN_BOUNDARY``) reproduce ``+u''``, so
    they are stored negated in ``Q`` to share the interior sign convention.
    For Dirichlet data the wall value enters with weight ``-(33/40)/h^2``,
    which makes constants exact.
    """
    n, h = grid.n, grid.h
    if n < 5:
        raise GridTooSmall(f"compact d2 needs n >= 5, got {n}")
    coeffs = D2_DIRICHLET_BOUNDARY if grid.bc == DIRICHLET else D2_NEUMANN_BOUNDARY
    P = _tridiag(n, 0.1, 1.0, 0.1)
    Q = _tridiag(n, -1.2, 2.4, -1.2)
    a = [-float(c) for c in coeffs]
    Q[0, :] = 0.0
    Q[-1, :] = 0.0
    Q[0, 0:5] = a
    Q[-1, n - 5 :] = list(reversed(a))
    Q = Q.tocsr() / h**2
    wall = float(sum(coeffs)) / h**2 if grid.bc == DIRICHLET else 0.0
    return CompactOperator(
        P=P.tocsr(),
        Q=Q,
        h=h,
        derivative_order=2,
        bc=grid.bc,
        approximates="-d2/dx2",
        boundary_coefficients=coeffs,
        wall_left=wall,
        wall_right=wall,
    )


def build_fd2_d2(grid: Grid1D) -> SparseOperator:
    """Second-order ``-d^2/dx^2``: tridiag(-1, 2, -1)/h^2.

    The Neumann variant uses a mirror node at the boundary and halves that
    row, giving ``(1, -1)/h^2`` in the corner: symmetric, positive
    semi-definite, constants in the kernel.
    """
    n, h = grid.n, grid.h
    if n < 2:
        raise GridTooSmall(f"fd2 d2 needs n >= 2, got {n}")
    M = _tridiag(n, -1.0, 2.0, -1.0)
    if grid.bc == NEUMANN:
        M[0, 0] = 1.0
        M[-1, -1] = 1.0
    return SparseOperator(M.tocsr() / h**2, h=h, symmetric=True, approximates="-d2/dx2", bc=grid.bc)


def build_fd2_d1(grid: Grid1D) -> SparseOperator:
    """Centered second-order ``d/dx`` with one-sided boundary rows."""
    n, h = grid.n, grid.h
    if n < 2:
        raise GridTooSmall(f"fd2 d1 needs n >= 2, got {n}")
    M = _tridiag(n, -1.0, 0.0, 1.0)
    M[0, :] = 0.0
    M[-1, :] = 0.0
    if n >= 3:
        M[0, 0:3] = [-3.0, 4.0, -1.0]
        M[-1, n - 3 :] = [1.0, -4.0, 3.0]
    else:
        M[0, 0:2] = [-2.0, 2.0]
        M[-1, 0:2] = [-2.0, 2.0]
    return SparseOperator(M.tocsr() / (2 * h), h=h, symmetric=False, approximates="+d/dx", bc=grid.bc)


# ---------------------------------------------------------------------------
# tensor-product operators

Operator1D = Union[CompactOperator, SparseOperator]


class AxisOperator(spla.LinearOperator):
    """A 1D operator acting along one axis of a tensor-grid field."""

    def __init__(self, op: Operator1D, shape: Sequence[int], axis: int):
        self.op = op
        self.field_shape = tuple(shape)
        self.axis = axis
        if self.field_shape[axis] != op.n:
            raise DimensionMismatch(f"operator size {op.n} does not match axis {axis} of {shape}")
        n = int(np.prod(shape))
        super().__init__(dtype=np.dtype(float), shape=(n, n))

    def _matvec(self, v):
        u = np.reshape(v, self.field_shape)
        return self.op.apply(u, axis=self.axis).ravel()

    def _matmat(self, V):
        return np.column_stack([self._matvec(c) for c in V.T])


class KronSumOperator(spla.LinearOperator):
    """Sum over axes of 1D operators, e.g. ``Ay (x) I + I (x) Ax`` in 2D.

    ``ops`` are listed in array-axis order (slowest first).  ``None`` entries
    are skipped, which gives the single-axis terms.
    """

    def __init__(self, ops: Sequence[Optional[Operator1D]], shape: Sequence[int]):
        self.ops = tuple(ops)
        self.field_shape = tuple(shape)
        if len(self.ops) != len(self.field_shape):
            raise DimensionMismatch("one operator (or None) per axis is required")
        for ax, op in enumerate(self.ops):
            if op is not None and op.n != self.field_shape[ax]:
                raise DimensionMismatch(
                    f"operator on axis {ax} has size {op.n}, grid axis has {self.field_shape[ax]}"
                )
        n = int(np.prod(self.field_shape))
        super().__init__(dtype=np.dtype(float), shape=(n, n))

    def apply_field(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.field_shape)
        for ax, op in enumerate(self.ops):
            if op is not None:
                out += op.apply(u, axis=ax)
        return out

    def _matvec(self, v):
        return self.apply_field(np.reshape(v, self.field_shape)).ravel()

    def _matmat(self, V):
        return np.column_stack([self._matvec(c) for c in V.T])

    def to_dense(self) -> np.ndarray:
        return dense_kron_sum(self.ops, self.field_shape)


def kron_sum_2d(opx: Optional[Operator1D], opy: Optional[Operator1D], g: Grid2D) -> KronSumOperator:
    """``(opy (x) I) + (I (x) opx)`` on a 2D grid (x fastest)."""
    return KronSumOperator((opy, opx), g.shape)


def kron_sum_3d(opx, opy, opz, g: Grid3D) -> KronSumOperator:
    return KronSumOperator((opz, opy, opx), g.shape)


def dense_kron_sum(ops: Sequence[Optional[Operator1D]], shape: Sequence[int]) -> np.ndarray:
    """Dense Kronecker assembly (test oracle; keep ``prod(shape)`` small)."""
    shape = tuple(shape)
    total = np.zeros((int(np.prod(shape)),) * 2)
    for ax, op in enumerate(ops):
        if op is None:
            continue
        term = np.ones((1, 1))
        for k, n in enumerate(shape):
            factor = op.to_dense() if k == ax else np.eye(n)
            term = np.kron(term, factor)
        total += term
    return total


def apply(op, u: np.ndarray) -> np.ndarray:
    """Apply any operator of this module (or a LinearOperator) to a vector."""
    u = np.asarray(u, dtype=float)
    if isinstance(op, (CompactOperator, SparseOperator)):
        if u.shape != (op.n,):
            raise DimensionMismatch(f"vector of shape {u.shape} for operator of size {op.n}")
        return op.apply(u)
    if isinstance(op, spla.LinearOperator):
        if u.size != op.shape[1]:
            raise DimensionMismatch(f"vector of size {u.size} for operator of shape {op.shape}")
        return op.matvec(u.ravel())
    raise TypeError(f"unsupported operator type {type(op).__name__}")
