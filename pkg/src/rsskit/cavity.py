"""Driven cavity in stream function / vorticity form.

Fields are stored as arrays of shape ``(ny, nx)`` over interior nodes
``(x_i, y_j) = (i h, j h)``; ``psi`` vanishes on the boundary and the wall
vorticity is carried separately.  Conventions:

* ``A4`` is the compact ``-Lap`` (homogeneous Dirichlet), so the Poisson
  relation ``Lap psi = omega`` reads ``A4 psi = -omega``;
* the lid (``y = Ly``) moves in ``+x`` with speed ``g(x)``; the wall
  formulas fix the velocity as ``(u, v) = (-psi_y, psi_x)``, so ``omega``
  is the usual curl and the primary vortex has ``psi > 0``;
* transport is ``d omega/dt + F = 0`` with
  ``F = A4 omega / Re - (psi_y omega_x - psi_x omega_y)``.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import GridTooSmall, NotConverged
from .grid_ops import Grid1D, Grid2D, KronSumOperator, build_compact_d1, build_compact_d2
from .solvers import FastPoissonContext, KrylovStats, gmres
from .timestep import (
    FastLaplacianPreconditioner,
    Kind,
    Outcome,
    SchemeConfig,
    SemilinearProblem,
    SteadyStateReport,
    march_to_steady,
    step,
)

__all__ = [
    "LIDS",
    "CavityConfig",
    "CavityOperators",
    "WallVorticity",
    "FlowState",
    "Vortex",
    "VortexReport",
    "wall_vorticity_order2",
    "wall_vorticity_order4",
    "wall_vorticity",
    "convective_term",
    "transport_residual",
    "poisson_solve_psi",
    "nlrss_preconditioner",
    "stokes_init",
    "cavity_step",
    "run_cavity",
    "locate_vortices",
]


def lid_a(x):
    return np.ones_like(x)


def lid_b(x):
    return (1.0 - (1.0 - 2.0 * x) ** 2) ** 2


def lid_none(x):
    return np.zeros_like(x)


LIDS = {"A": lid_a, "B": lid_b, "none": lid_none}


@dataclass(frozen=True)
class CavityConfig:
    """Run parameters.  ``N`` interior points along x; along y there are
    ``N`` (square) or ``2N + 1`` (``Ly = 2``) so that cells stay square."""

    Re: float = 100.0
    N: int = 63
    Ly: int = 1
    lid: str = "A"
    tau: float = 1.0
    dt: float = 0.01
    eps_stop: float = 1e-5
    kind: str = "rss"
    extrapolate: bool = False
    wall_order: int = 4
    wall_variant: str = "printed"
    T_max: float = 2000.0
    poisson_tol: float = 1e-12
    inner_tol: float = 1e-8
    refresh: int = 1

    def __post_init__(self):
        if self.Re <= 0:
            raise ValueError("Re must be positive")
        if self.Ly not in (1, 2):
            raise ValueError("Ly must be 1 or 2")
        if self.lid not in LIDS:
            raise ValueError(f"lid must be one of {sorted(LIDS)}")
        if self.wall_order not in (2, 4):
            raise ValueError("wall_order must be 2 or 4")
        if self.eps_stop <= 0:
            raise ValueError("eps_stop must be positive")
        if self.N < 5:
            raise GridTooSmall("the cavity needs N >= 5")
        if self.refresh < 1:
            raise ValueError("refresh must be >= 1")
        Kind.parse(self.kind)

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)

    @property
    def Ny(self) -> int:
        return self.N if self.Ly == 1 else 2 * self.N + 1

    @property
    def grid(self) -> Grid2D:
        gx = Grid1D(self.N)
        gy = Grid1D(self.Ny, h=self.h, length=float(self.Ly))
        return Grid2D(gx, gy)

    @property
    def scheme(self) -> SchemeConfig:
        return SchemeConfig(
            kind=self.kind, tau=self.tau, dt=self.dt, extrapolate=self.extrapolate, inner_tol=self.inner_tol
        )

    def replace(self, **kw) -> "CavityConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# operators


class CavityOperators:
    """Compact and second-order operators on one cavity grid (immutable, cached)."""

    def __init__(self, nx: int, ny: int, h: float):
        self.nx, self.ny, self.h = nx, ny, h
        self.shape = (ny, nx)
        gx = Grid1D(nx, h=h, length=h * (nx + 1))
        gy = Grid1D(ny, h=h, length=h * (ny + 1))
        self.Dx, self.Dy = build_compact_d1(gx), build_compact_d1(gy)
        self.D2x, self.D2y = build_compact_d2(gx), build_compact_d2(gy)
        self.A4 = KronSumOperator((self.D2y, self.D2x), self.shape)
        self.ctx = FastPoissonContext.build(self.shape, (h, h))
        self.x = h * np.arange(1, nx + 1)
        self.y = h * np.arange(1, ny + 1)
        # second order: centred first derivatives with zero wall data, 5-point -Lap
        def c1(n):
            return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2 * h)

        def l2(n):
            return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2

        Ix, Iy = sp.identity(nx), sp.identity(ny)
        self.Dx2 = sp.kron(Iy, c1(nx), format="csr")
        self.Dy2 = sp.kron(c1(ny), Ix, format="csr")
        self.A2 = (sp.kron(Iy, l2(nx)) + sp.kron(l2(ny), Ix)).tocsr()

    @classmethod
    @functools.lru_cache(maxsize=8)
    def get(cls, nx: int, ny: int, h: float) -> "CavityOperators":
        return cls(nx, ny, h)

    @classmethod
    def for_field(cls, u: np.ndarray, h: Optional[float] = None) -> "CavityOperators":
        ny, nx = u.shape
        return cls.get(nx, ny, h if h is not None else 1.0 / (nx + 1))

    def dx(self, u, walls: "WallVorticity" = None):
        if walls is None:
            return self.Dx.apply(u, axis=1)
        return self.Dx.apply(u, axis=1, left=walls.left, right=walls.right)

    def dy(self, u, walls: "WallVorticity" = None):
        if walls is None:
            return self.Dy.apply(u, axis=0)
        return self.Dy.apply(u, axis=0, left=walls.bottom, right=walls.top)

    def neg_laplacian(self, u, walls: "WallVorticity" = None):
        """Compact ``-Lap u`` with optional wall values."""
        if walls is None:
            return self.A4.apply_field(u)
        return self.D2x.apply(u, axis=1, left=walls.left, right=walls.right) + self.D2y.apply(
            u, axis=0, left=walls.bottom, right=walls.top
        )


# ---------------------------------------------------------------------------
# state


@dataclass
class WallVorticity:
    bottom: np.ndarray
    top: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def zeros(cls, nx: int, ny: int) -> "WallVorticity":
        return cls(np.zeros(nx), np.zeros(nx), np.zeros(ny), np.zeros(ny))

    def max_abs_diff(self, other: "WallVorticity") -> float:
        return max(
            float(np.max(np.abs(a - b)))
            for a, b in ((self.bottom, other.bottom), (self.top, other.top), (self.left, other.left), (self.right, other.right))
        )


@dataclass
class FlowState:
    omega: np.ndarray
    psi: np.ndarray
    walls: WallVorticity
    t: float = 0.0
    steps: int = 0
    poisson_iterations: int = 0

    @classmethod
    def zeros(cls, ny: int, nx: int) -> "FlowState":
        return cls(np.zeros((ny, nx)), np.zeros((ny, nx)), WallVorticity.zeros(nx, ny))

    def copy(self) -> "FlowState":
        w = self.walls
        return FlowState(
            self.omega.copy(), self.psi.copy(),
            WallVorticity(w.bottom.copy(), w.top.copy(), w.left.copy(), w.right.copy()),
            self.t, self.steps, self.poisson_iterations,
        )


# ---------------------------------------------------------------------------
# wall vorticity


def wall_vorticity_order2(psi: np.ndarray, g: np.ndarray, h: float, variant: str = "printed") -> WallVorticity:
    """Three-point wall formulas; the lid term is ``-6 h g / (2 h^2)``.

    ``variant="printed"`` uses ``(psi_1 - 8 psi_2)/(2h^2)`` on the bottom
    and left walls as tabulated.  ``variant="briley"`` uses the mirror image
    of the top/right formulas, ``(8 psi_1 - psi_2)/(2h^2)``, which is the
    consistent second-order closure.
    """
    psi = np.asarray(psi, dtype=float)
    g = np.broadcast_to(np.asarray(g, dtype=float), (psi.shape[1],))
    c = 1.0 / (2 * h * h)
    top = (-psi[-2] + 8 * psi[-1] - 6 * h * g) * c
    right = (-psi[:, -2] + 8 * psi[:, -1]) * c
    if variant == "printed":
        bottom = (psi[0] - 8 * psi[1]) * c
        left = (psi[:, 0] - 8 * psi[:, 1]) * c
    elif variant == "briley":
        bottom = (8 * psi[0] - psi[1]) * c
        left = (8 * psi[:, 0] - psi[:, 1]) * c
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return WallVorticity(bottom, top, left, right)


_W4 = (8.0, -3.0, 8.0 / 9.0, -1.0 / 8.0)


def wall_vorticity_order4(psi: np.ndarray, g: np.ndarray, h: float) -> WallVorticity:
    """Four-point extrapolation ``(8 psi_1 - 3 psi_2 + 8/9 psi_3 - 1/8 psi_4)/h^2``,
    lid term ``-25 g / (6 h)``."""
    psi = np.asarray(psi, dtype=float)
    ny, nx = psi.shape
    if min(nx, ny) < 4:
        raise GridTooSmall("fourth-order wall extrapolation needs 4 interior points per direction")
    g = np.broadcast_to(np.asarray(g, dtype=float), (nx,))
    a, b, c, d = _W4
    s = 1.0 / (h * h)
    bottom = (a * psi[0] + b * psi[1] + c * psi[2] + d * psi[3]) * s
    top = (a * psi[-1] + b * psi[-2] + c * psi[-3] + d * psi[-4]) * s - 25.0 / (6.0 * h) * g
    left = (a * psi[:, 0] + b * psi[:, 1] + c * psi[:, 2] + d * psi[:, 3]) * s
    right = (a * psi[:, -1] + b * psi[:, -2] + c * psi[:, -3] + d * psi[:, -4]) * s
    return WallVorticity(bottom, top, left, right)


def wall_vorticity(psi, g, h, order: int = 4, variant: str = "printed") -> WallVorticity:
    if order == 4:
        return wall_vorticity_order4(psi, g, h)
    if order == 2:
        return wall_vorticity_order2(psi, g, h, variant)
    raise ValueError("order must be 2 or 4")


# ---------------------------------------------------------------------------
# transport


def convective_term(psi: np.ndarray, omega: np.ndarray, ops: CavityOperators = None, walls: WallVorticity = None) -> np.ndarray:
    """``psi_y omega_x - psi_x omega_y`` with compact first derivatives."""
    ops = ops or CavityOperators.for_field(psi)
    return ops.dy(psi) * ops.dx(omega, walls) - ops.dx(psi) * ops.dy(omega, walls)


def transport_residual(psi, omega, walls, Re, ops: CavityOperators = None, convection: bool = True) -> np.ndarray:
    """``F = A4 omega / Re - J(psi, omega)`` using wall data; zero at steady state."""
    ops = ops or CavityOperators.for_field(psi)
    F = ops.neg_laplacian(omega, walls) / Re
    if convection:
        F = F - convective_term(psi, omega, ops, walls)
    return F


def poisson_solve_psi(
    omega: np.ndarray,
    ops: CavityOperators = None,
    tol: float = 1e-12,
    x0: Optional[np.ndarray] = None,
    side: str = "right",
) -> tuple[np.ndarray, KrylovStats]:
    """Solve the compact ``Lap psi = omega`` (``A4 psi = -omega``), ``psi = 0`` on walls.

    GMRES preconditioned by the sine-transform inverse of ``A2``.
    """
    omega = np.asarray(omega, dtype=float)
    ops = ops or CavityOperators.for_field(omega)
    b = -omega.ravel()
    x, stats = gmres(
        ops.A4.matvec, b, precond=ops.ctx.solve,
        x0=None if x0 is None else np.ravel(x0), tol=tol, maxiter=500, side=side,
    )
    return x.reshape(omega.shape), stats


def nlrss_preconditioner(psi: np.ndarray, Re: float, ops: CavityOperators = None, velocities=None) -> sp.csr_matrix:
    """Frozen-velocity convection-diffusion operator (second order).

    ``B_k = A2/Re - diag(psi_y) Dx + diag(psi_x) Dy``: the linearization of
    ``F`` in ``omega`` with centred differences.  ``velocities`` may pass
    precomputed ``(psi_x, psi_y)``; otherwise compact derivatives are used.
    """
    ops = ops or CavityOperators.for_field(psi)
    if velocities is None:
        px, py = ops.dx(psi), ops.dy(psi)
    else:
        px, py = velocities
    B = ops.A2 / Re - sp.diags(np.ravel(py)) @ ops.Dx2 + sp.diags(np.ravel(px)) @ ops.Dy2
    return B.tocsr()


# ---------------------------------------------------------------------------
# Algorithm: walls -> transport step -> Poisson


class _Stepper:
    """Owns operators and preconditioners for one configuration."""

    def __init__(self, cfg: CavityConfig, convection: bool = True, Re: Optional[float] = None):
        self.cfg = cfg
        self.convection = convection
        self.Re = cfg.Re if Re is None else Re
        self.ops = CavityOperators.get(cfg.N, cfg.Ny, cfg.h)
        self.g = LIDS[cfg.lid](self.ops.x)
        self.B = FastLaplacianPreconditioner(self.ops.shape, cfg.h, scale=1.0 / self.Re)
        self.scheme = cfg.scheme
        if not convection:
            self.scheme = self.scheme.replace(kind=Kind.RSS)
        self._Bk = None

    def walls(self, psi):
        return wall_vorticity(psi, self.g, self.cfg.h, self.cfg.wall_order, self.cfg.wall_variant)

    def problem(self, psi, walls) -> tuple[SemilinearProblem, tuple]:
        ops, Re = self.ops, self.Re
        shape = ops.shape
        wall_part = ops.neg_laplacian(np.zeros(shape), walls).ravel() / Re
        if self.convection:
            px, py = ops.dx(psi), ops.dy(psi)
            pxr, pyr = px.ravel(), py.ravel()
            # convective part with zero interior omega: only wall contributions
            Jw = (py * ops.dx(np.zeros(shape), walls) - px * ops.dy(np.zeros(shape), walls)).ravel()

            def f_nl(w, _pxr=pxr, _pyr=pyr, _Jw=Jw):
                W = w.reshape(shape)
                J = _pyr * ops.Dx.apply(W, axis=1).ravel() - _pxr * ops.Dy.apply(W, axis=0).ravel()
                return wall_part - (J + _Jw)

            vel = (px, py)
        else:
            f_nl = lambda w: wall_part
            vel = None
        A = _ScaledOperator(ops.A4, 1.0 / Re)
        return SemilinearProblem(A=A, B=self.B, f_nl=f_nl), vel

    def advance(self, state: FlowState) -> FlowState:
        walls = self.walls(state.psi)
        p, vel = self.problem(state.psi, walls)
        B_k = None
        if self.scheme.kind is Kind.NLRSS:
            if self._Bk is None or state.steps % self.cfg.refresh == 0:
                self._Bk = nlrss_preconditioner(state.psi, self.Re, self.ops, vel)
            B_k = self._Bk
        w = step(p, state.omega.ravel(), self.scheme, B_k).reshape(self.ops.shape)
        psi, stats = poisson_solve_psi(w, self.ops, self.cfg.poisson_tol, x0=state.psi)
        return FlowState(
            w, psi, walls, state.t + self.scheme.dt, state.steps + 1, state.poisson_iterations + stats.iterations
        )


class _ScaledOperator:
    """``c * op`` for a LinearOperator ``op`` without densifying."""

    def __init__(self, op, c):
        self.op, self.c = op, c
        self.shape = op.shape

    def as_linear_operator(self):
        import scipy.sparse.linalg as spla

        return spla.LinearOperator(self.shape, matvec=lambda v: self.c * self.op.matvec(v), dtype=float)


def cavity_step(state: FlowState, cfg: CavityConfig, convection: bool = True) -> FlowState:
    """One outer step: wall update, one (extrapolated / NL) RSS transport step, Poisson solve."""
    return _Stepper(cfg, convection).advance(state)


def _stokes_direct(st: "_Stepper", tol: float) -> FlowState:
    """Steady Stokes pair from the affine equation in ``psi`` alone.

    At a fixed point of the Stokes march ``omega = -A4 psi`` and
    ``-Lap(omega; walls(psi)) = 0``; GMRES on that residual, preconditioned by
    ``A2^{-2}`` (two sine-transform solves).
    """
    ops, h, g = st.ops, st.cfg.h, st.g
    n = ops.shape[0] * ops.shape[1]

    def R(v):
        psi = v.reshape(ops.shape)
        om = -ops.A4.apply_field(psi)
        return ops.neg_laplacian(om, st.walls(psi)).ravel()

    r0 = R(np.zeros(n))
    x, _ = gmres(lambda v: R(v) - r0, -r0, precond=lambda v: ops.ctx.solve(ops.ctx.solve(v)),
                 tol=tol, restart=100, maxiter=5000)
    psi = x.reshape(ops.shape)
    # close the loop through the Poisson solver so psi and omega are mutually consistent
    omega = -ops.A4.apply_field(psi)
    psi, _ = poisson_solve_psi(omega, ops, st.cfg.poisson_tol, x0=psi)
    return FlowState(omega, psi, st.walls(psi))


def stokes_init(
    cfg: CavityConfig,
    tol: float = 1e-8,
    dt: Optional[float] = None,
    max_steps: int = 20000,
    method: str = "direct",
    state0: Optional[FlowState] = None,
) -> tuple[FlowState, SteadyStateReport]:
    """Steady Stokes state: the transport/Poisson loop without convection.

    ``method="march"`` runs the loop in pseudo time (``Re = 1``, RSS with
    ``tau = 1``) from ``state0`` or rest until ``|(psi^{k+1}-psi^k)/dt| < tol``.
    The lagged wall vorticity limits the usable ``dt`` (about ``1e-4``).
    ``method="direct"`` solves for the same fixed point with GMRES and then
    confirms it with marching steps, which is much faster.  The result does
    not depend on ``cfg.Re``.
    """
    if method not in ("direct", "march"):
        raise ValueError("method must be 'direct' or 'march'")
    if dt is None:
        dt = 1e-4 if method == "march" else 1e-5
    scfg = cfg.replace(Re=1.0, kind="rss", extrapolate=False, tau=1.0, dt=dt)
    st = _Stepper(scfg, convection=False, Re=1.0)
    if state0 is not None:
        state = state0.copy()
    elif method == "direct" and np.any(st.g):
        state = _stokes_direct(st, 1e-13)
    else:
        state = FlowState.zeros(cfg.Ny, cfg.N)
    state.t, state.steps, state.poisson_iterations = 0.0, 0, 0
    if not np.any(st.g) and state0 is None:
        return state, SteadyStateReport(Outcome.CONVERGED, 0.0, 0, scfg.dt, np.zeros(0), state)
    rep = march_to_steady(
        st.advance, state, scfg.dt, tol, T_max=math.inf, monitor=lambda s: s.psi, max_steps=max_steps
    )
    if rep.outcome is not Outcome.CONVERGED:
        raise NotConverged(f"Stokes initialization did not converge ({rep.outcome.value} after {rep.steps} steps)")
    out = rep.state
    out.walls = st.walls(out.psi)
    out.t, out.steps, out.poisson_iterations = 0.0, 0, 0
    return out, rep


def run_cavity(
    cfg: CavityConfig,
    state0: Optional[FlowState] = None,
    progress: Optional[Callable[[int, float, float], None]] = None,
    max_steps: Optional[int] = None,
) -> tuple[SteadyStateReport, FlowState]:
    """Stokes start (unless ``state0``) then march to ``|dpsi/dt| <= eps_stop``."""
    if state0 is None:
        state0, _ = stokes_init(cfg)
    st = _Stepper(cfg)
    t0 = time.perf_counter()
    rep = march_to_steady(
        st.advance, state0, cfg.dt, cfg.eps_stop, T_max=cfg.T_max, monitor=lambda s: s.psi,
        max_steps=max_steps, solves_per_step=cfg.scheme.solves_per_step, progress=progress,
    )
    rep.wall_time = time.perf_counter() - t0
    return rep, rep.state


# ---------------------------------------------------------------------------
# vortices


@dataclass
class Vortex:
    label: str
    value: float
    x: float
    y: float
    i: int
    j: int


@dataclass
class VortexReport:
    primary: Vortex
    secondary: list = field(default_factory=list)
    sign: float = 1.0

    def as_dict(self) -> dict:
        d = lambda v: {"label": v.label, "value": v.value, "x": v.x, "y": v.y}
        return {"primary": d(self.primary), "secondary": [d(v) for v in self.secondary]}


def _local_extrema(f: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Nodes where ``f`` is a strict local maximum over the 8 neighbours and exceeds ``threshold``."""
    F = np.pad(f, 1, constant_values=-np.inf)
    c = F[1:-1, 1:-1]
    mask = c > threshold
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == di == 0:
                continue
            mask &= c >= F[1 + dj : F.shape[0] - 1 + dj, 1 + di : F.shape[1] - 1 + di]
    return [tuple(ix) for ix in np.argwhere(mask)]


def locate_vortices(psi: np.ndarray, grid: Grid2D = None, threshold: float = 1e-5) -> VortexReport:
    """Primary vortex at the grid-node argmax of ``|psi|`` (value reported positive).

    Secondary vortices are local extrema of the opposite sign with magnitude
    above ``threshold``.  With a tall cavity (``Ly > 1``) the strongest one
    below the primary is labelled ``VI`` and the primary ``VS``; on the
    square they are labelled by corner (``BL``, ``BR``, ``TL``, ``TR``).
    """
    psi = np.asarray(psi, dtype=float)
    ny, nx = psi.shape
    if grid is None:
        h = 1.0 / (nx + 1)
        xs, ys = h * np.arange(1, nx + 1), h * np.arange(1, ny + 1)
    else:
        xs, ys = grid.gx.nodes, grid.gy.nodes
    j, i = np.unravel_index(int(np.argmax(np.abs(psi))), psi.shape)
    sign = 1.0 if psi[j, i] >= 0 else -1.0
    tall = ys[-1] > 1.5 * xs[-1]
    primary = Vortex("VS" if tall else "P", float(abs(psi[j, i])), float(xs[i]), float(ys[j]), int(i), int(j))
    sec = []
    for jj, ii in _local_extrema(-sign * psi, threshold):
        x, y = float(xs[ii]), float(ys[jj])
        if tall:
            label = "VI" if y < primary.y else "VU"
        else:
            label = ("B" if y < 0.5 * (ys[-1] + ys[0]) else "T") + ("L" if x < 0.5 else "R")
        sec.append(Vortex(label, float(abs(psi[jj, ii])), x, y, int(ii), int(jj)))
    sec.sort(key=lambda v: -v.value)
    return VortexReport(primary, sec, sign)
