"""Model problems: heat equation with a manufactured solution, Allen-Cahn."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .grid_ops import (
    NEUMANN,
    CompactOperator,
    Grid1D,
    Grid2D,
    KronSumOperator,
    build_compact_d2,
    build_fd2_d2,
)
from .timestep import (
    BandedPreconditioner,
    DiagonalPreconditioner,
    FastLaplacianPreconditioner,
    IdentityPreconditioner,
    SchemeConfig,
    SemilinearProblem,
    step,
)

__all__ = [
    "HeatProblem",
    "heat_problem",
    "heat_manufactured",
    "AllenCahnProblem",
    "allen_cahn_problem",
    "ac_f",
    "ac_F",
    "ac_residual",
    "ac_energy",
    "EnergyRecord",
    "run_allen_cahn",
    "shen_stabilized_step",
    "lipschitz_bound",
    "operator_diagonal",
]


def heat_manufactured(grid, t: float) -> np.ndarray:
    """Samples of ``exp(-d pi^2 t) prod sin(pi x_i)`` on a Dirichlet grid of dimension d."""
    axes = grid.axes
    dim = len(axes)
    vals = np.ones(())
    for g in axes:  # slowest axis first
        vals = np.multiply.outer(vals, np.sin(np.pi * g.nodes))
    return np.exp(-dim * np.pi**2 * t) * vals.ravel()


def operator_diagonal(op) -> np.ndarray:
    """Diagonal of a 1D operator or of a Kronecker sum of 1D operators."""
    if isinstance(op, KronSumOperator):
        d = np.zeros(op.field_shape)
        for ax, o in enumerate(op.ops):
            if o is None:
                continue
            shp = [1] * len(op.field_shape)
            shp[ax] = op.field_shape[ax]
            d = d + np.diag(o.to_dense()).reshape(shp)
        return d.ravel()
    if sp.issparse(op):
        return op.diagonal()
    if hasattr(op, "to_dense"):
        return np.diag(op.to_dense()).copy()
    return np.diag(np.asarray(op)).copy()


@dataclass
class HeatProblem(SemilinearProblem):
    """``du/dt - Lap u = f`` with homogeneous Dirichlet data."""

    grid: object = None

    def exact_solution(self, t: float) -> np.ndarray:
        return heat_manufactured(self.grid, t)


def heat_problem(n: int, dim: int = 1, order: int = 4, preconditioner: str = "second_order", forcing=None) -> HeatProblem:
    """Heat equation on the unit interval/square.

    ``order=4`` uses the compact operator for A, ``order=2`` the
    three-point one.  ``preconditioner`` selects B: ``second_order`` (A2,
    sine-transform solve), ``diagonal`` (diagonal of A) or ``identity``.
    """
    g1 = Grid1D(n)
    op1 = build_compact_d2(g1) if order == 4 else build_fd2_d2(g1)
    if dim == 1:
        grid = g1
        A = op1
    elif dim == 2:
        grid = Grid2D.square(n)
        A = KronSumOperator((op1, op1), grid.shape)
    else:
        raise ValueError("heat problems are 1D or 2D")
    shape = grid.shape
    if preconditioner == "second_order":
        B = FastLaplacianPreconditioner(shape, g1.h)
    elif preconditioner == "diagonal":
        B = DiagonalPreconditioner(operator_diagonal(A))
    elif preconditioner == "identity":
        B = IdentityPreconditioner(int(np.prod(shape)))
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    return HeatProblem(A=A, B=B, forcing=forcing, exact=lambda t: heat_manufactured(grid, t), grid=grid)


# ---------------------------------------------------------------------------
# Allen-Cahn


def ac_f(u):
    return u**3 - u


def ac_F(u):
    """Primitive of ``ac_f`` with ``F(0) = 0``; ``F >= -1/4``."""
    u2 = u * u
    return 0.25 * u2 * u2 - 0.5 * u2


def lipschitz_bound(margin: float = 0.0) -> float:
    """``max |f'(u)| = max |3u^2 - 1|`` over ``|u| <= 1 + margin``."""
    m = 1.0 + margin
    return max(abs(3 * m * m - 1), 1.0)


@dataclass
class EnergyRecord:
    times: np.ndarray
    energy: np.ndarray

    def increments(self) -> np.ndarray:
        return np.diff(self.energy)

    def is_non_increasing(self, tol: float = 1e-10) -> bool:
        return bool(np.all(self.increments() <= tol))


@dataclass
class AllenCahnProblem:
    """``du/dt + A u + f(u)/eps^2 = 0`` with homogeneous Neumann A.

    ``A`` is the symmetric three-point Neumann Laplacian on a cell-centred
    grid (``h = length/n``).  ``L`` is the bound on ``|f'|`` used for the
    stability test; ``L_margin`` the one over ``[-1.1, 1.1]``.
    """

    eps: float
    n: int = 63
    length: float = 1.0
    A: sp.csr_matrix = field(default=None, repr=False)
    L: float = 2.0
    L_margin: float = field(default_factory=lambda: lipschitz_bound(0.1))

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        self.grid = Grid1D(self.n, h=self.length / self.n, bc=NEUMANN, length=self.length)
        if self.A is None:
            self.A = build_fd2_d2(self.grid).matrix.tocsr()
        self._Ainv = BandedPreconditioner(self.A)

    def f(self, u):
        return ac_f(u)

    def F(self, u):
        return ac_F(u)

    def nonlinear(self, u):
        return ac_f(u) / self.eps**2

    def semilinear(self, B="diagonal") -> SemilinearProblem:
        """Wrap as a ``SemilinearProblem`` with stabilizer ``diagonal``, ``A`` or an explicit B."""
        if isinstance(B, str):
            if B == "diagonal":
                B = DiagonalPreconditioner(self.A.diagonal())
            elif B in ("A", "second_order"):
                B = self._Ainv
            elif B == "identity":
                B = IdentityPreconditioner(self.n)
            else:
                raise ValueError(f"unknown stabilizer {B!r}")
        return SemilinearProblem(A=self.A, B=B, f_nl=self.nonlinear)


def allen_cahn_problem(eps: float, n: int = 63, **kw) -> AllenCahnProblem:
    return AllenCahnProblem(eps=eps, n=n, **kw)


def ac_residual(p: AllenCahnProblem, u: np.ndarray) -> np.ndarray:
    """``A u + f(u)/eps^2``."""
    return p.A @ u + ac_f(u) / p.eps**2


def ac_energy(p: AllenCahnProblem, u: np.ndarray) -> float:
    """``E(u) = <A u, u>/2 + <F(u), 1>/eps^2`` with plain Euclidean products."""
    return 0.5 * float(u @ (p.A @ u)) + float(np.sum(ac_F(u))) / p.eps**2


def shen_stabilized_step(p: AllenCahnProblem, u: np.ndarray, S: float, dt: float) -> np.ndarray:
    """``((1 + S dt/eps^2) I + dt A) u1 = (1 + S dt/eps^2) u - (dt/eps^2) f(u)``."""
    if S < 0:
        raise ValueError("S must be non-negative")
    s = 1.0 + S * dt / p.eps**2
    rhs = s * u - dt / p.eps**2 * ac_f(u)
    return p._Ainv.solve_shifted(rhs / s, dt / s)


def run_allen_cahn(
    p: AllenCahnProblem,
    cfg: SchemeConfig,
    steps: int,
    u0: Optional[np.ndarray] = None,
    seed: int = 0,
    amplitude: float = 0.05,
    B="diagonal",
    scheme: str = "rss",
    S: float = 0.0,
) -> tuple[np.ndarray, EnergyRecord]:
    """March ``steps`` steps of RSS (or Shen's scheme) and record the energy."""
    if u0 is None:
        u0 = amplitude * (1.0 - 2.0 * np.random.default_rng(seed).random(p.n))
    u = np.array(u0, dtype=float)
    sp_ = p.semilinear(B) if scheme == "rss" else None
    E = [ac_energy(p, u)]
    for _ in range(steps):
        if scheme == "rss":
            u = step(sp_, u, cfg)
        elif scheme == "shen":
            u = shen_stabilized_step(p, u, S, cfg.dt)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        E.append(ac_energy(p, u))
    times = cfg.dt * np.arange(steps + 1)
    return u, EnergyRecord(times, np.asarray(E))
