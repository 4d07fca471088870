"""Time-marching schemes for ``du/dt + F(u) = 0`` with ``F(u) = A u + f_nl(u) - f``.

Every implicit scheme here is written in increment form

    (I + c M) (u^{k+1} - u^k) = -dt F(u^k)

with ``M = B`` (RSS, cheap preconditioner), ``M = B_k`` (NLRSS, refreshed
from the state) or ``M = A`` (theta scheme, ``c = theta dt``).  The
preconditioner objects below own the ``(I + c B)`` solve and cache whatever
factorization the coefficient ``c`` needs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import BlowUp, DimensionMismatch, SolveFailure
from .solvers import FastPoissonContext, as_operator, banded_factor, gmres

__all__ = [
    "Kind",
    "Outcome",
    "SchemeConfig",
    "SemilinearProblem",
    "IdentityPreconditioner",
    "DiagonalPreconditioner",
    "BandedPreconditioner",
    "FastLaplacianPreconditioner",
    "DensePreconditioner",
    "SteadyStateReport",
    "step_forward_euler",
    "step_rss",
    "step_theta",
    "step_backward_euler_linear",
    "step_extrapolated",
    "step_nlrss",
    "step",
    "march",
    "march_to_steady",
    "run_to_steady",
    "BLOWUP_THRESHOLD",
]

BLOWUP_THRESHOLD = 1e10


class Kind(str, enum.Enum):
    FORWARD_EULER = "forward_euler"
    BACKWARD_EULER = "backward_euler"
    THETA = "theta"
    RSS = "rss"
    NLRSS = "nlrss"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"fe": "forward_euler", "euler": "forward_euler", "be": "backward_euler"}
        return cls(aliases.get(key, key))


class Outcome(str, enum.Enum):
    CONVERGED = "Converged"
    NOT_CONVERGED = "NotConverged"
    BLOW_UP = "BlowUp"


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selector.

    ``preconditioner`` names the stabilizing operator B a problem builder
    should attach (``second_order``, ``diagonal`` or ``identity``); the
    steppers themselves only see the ``SemilinearProblem.B`` object.
    """

    kind: Kind = Kind.RSS
    tau: float = 1.0
    dt: float = 1e-3
    theta: float = 1.0
    extrapolate: bool = False
    preconditioner: str = "second_order"
    inner_tol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.preconditioner not in ("second_order", "diagonal", "identity"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def replace(self, **kw) -> "SchemeConfig":
        from dataclasses import replace

        return replace(self, **kw)

    @property
    def solves_per_step(self) -> int:
        if self.kind is Kind.FORWARD_EULER:
            return 0
        return 3 if self.extrapolate else 1


# ---------------------------------------------------------------------------
# stabilizing operators B with an (I + c B) solve


class _Preconditioner:
    n: int

    def matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve_shifted(self, rhs: np.ndarray, c: float) -> np.ndarray:
        """Solve ``(I + c B) x = rhs``."""
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        return np.column_stack([self.matvec(e) for e in np.eye(self.n)])

    def as_linear_operator(self):
        import scipy.sparse.linalg as spla

        return spla.LinearOperator((self.n, self.n), matvec=self.matvec, dtype=float)


@dataclass
class IdentityPreconditioner(_Preconditioner):
    n: int
    scale: float = 1.0

    def matvec(self, v):
        return self.scale * np.asarray(v, dtype=float)

    def solve_shifted(self, rhs, c):
        return np.asarray(rhs, dtype=float) / (1.0 + c * self.scale)


@dataclass
class DiagonalPreconditioner(_Preconditioner):
    diag: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float).ravel()
        self.n = self.diag.size

    def matvec(self, v):
        return self.diag * v

    def solve_shifted(self, rhs, c):
        denom = 1.0 + c * self.diag
        if np.any(denom == 0.0):
            raise SolveFailure("I + cB is singular")
        return rhs / denom


class BandedPreconditioner(_Preconditioner):
    """Sparse banded B; the band LU of ``I + cB`` is cached per ``c``."""

    def __init__(self, matrix):
        self.matrix = sp.csr_matrix(matrix, dtype=float)
        self.n = self.matrix.shape[0]
        self._cache: dict[float, object] = {}

    def matvec(self, v):
        return self.matrix @ v

    def solve_shifted(self, rhs, c):
        fac = self._cache.get(c)
        if fac is None:
            if len(self._cache) > 4:
                self._cache.clear()
            fac = banded_factor(sp.identity(self.n, format="csr") + c * self.matrix)
            self._cache[c] = fac
        return fac.solve(rhs)

    def to_dense(self):
        return self.matrix.toarray()


class FastLaplacianPreconditioner(_Preconditioner):
    """``B = scale * A2`` on a Dirichlet tensor grid, solved by sine transforms."""

    def __init__(self, shape, h, scale: float = 1.0):
        if np.isscalar(h):
            h = (float(h),) * len(shape)
        self.ctx = FastPoissonContext.build(shape, h)
        self.scale = float(scale)
        self.n = self.ctx.size

    def matvec(self, v):
        return self.scale * self.ctx.apply(v).ravel()

    def solve_shifted(self, rhs, c):
        return self.ctx.solve_scaled(rhs, c * self.scale).ravel()


class DensePreconditioner(_Preconditioner):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.n = self.matrix.shape[0]
        self._cache: dict[float, tuple] = {}

    def matvec(self, v):
        return self.matrix @ v

    def solve_shifted(self, rhs, c):
        lu = self._cache.get(c)
        if lu is None:
            self._cache.clear()
            lu = scipy.linalg.lu_factor(np.eye(self.n) + c * self.matrix)
            self._cache[c] = lu
        return scipy.linalg.lu_solve(lu, rhs)

    def to_dense(self):
        return self.matrix.copy()


def _as_preconditioner(B):
    if B is None or isinstance(B, _Preconditioner):
        return B
    if sp.issparse(B):
        return BandedPreconditioner(B)
    if isinstance(B, np.ndarray):
        return DensePreconditioner(B)
    if hasattr(B, "solve_shifted"):
        return B
    raise TypeError(f"cannot use {type(B).__name__} as a stabilizing operator")


# ---------------------------------------------------------------------------
# problem


@dataclass
class SemilinearProblem:
    """``du/dt + A u + f_nl(u) = f``.

    ``B`` is the stabilizing operator; dense arrays and sparse matrices are
    wrapped automatically.
    """

    A: object
    B: object = None
    f_nl: Optional[Callable[[np.ndarray], np.ndarray]] = None
    forcing: Optional[np.ndarray] = None
    exact: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        self._Aop = as_operator(self.A)
        self.B = _as_preconditioner(self.B)
        n = self._Aop.shape[0]
        if self.B is not None and self.B.n != n:
            raise DimensionMismatch(f"A is {n}x{n} but B has size {self.B.n}")
        if self.forcing is not None:
            self.forcing = np.asarray(self.forcing, dtype=float).ravel()
            if self.forcing.size != n:
                raise DimensionMismatch("forcing has wrong length")

    @property
    def n(self) -> int:
        return self._Aop.shape[0]

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        return self._Aop.matvec(u)

    def residual(self, u: np.ndarray) -> np.ndarray:
        """``F(u) = A u + f_nl(u) - f``; never mutates ``u``."""
        r = self._Aop.matvec(u)
        if self.f_nl is not None:
            r = r + self.f_nl(u)
        if self.forcing is not None:
            r = r - self.forcing
        return r

    @property
    def is_linear(self) -> bool:
        return self.f_nl is None


# ---------------------------------------------------------------------------
# steppers


def step_forward_euler(p: SemilinearProblem, u: np.ndarray, dt: float) -> np.ndarray:
    return u - dt * p.residual(u)


def _require_B(p):
    if p.B is None:
        raise ValueError("this scheme needs a stabilizing operator B")
    return p.B


def _rss_increment(p, u, s, tau):
    return _require_B(p).solve_shifted(-s * p.residual(u), tau * s)


def step_rss(p: SemilinearProblem, u: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """One RSS step: ``(I + tau dt B)(u1 - u) = -dt F(u)``."""
    if cfg.tau == 0.0:
        return step_forward_euler(p, u, cfg.dt)
    return u + _rss_increment(p, u, cfg.dt, cfg.tau)


def _implicit_increment(matvec, rhs, precond, tol, x0=None):
    x, _ = gmres(matvec, rhs, precond=precond, x0=x0, tol=tol, maxiter=2000)
    return x


def step_theta(p: SemilinearProblem, u: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Theta scheme, nonlinear part explicit: ``(I + theta dt A)(u1 - u) = -dt F(u)``.

    The linear solve is GMRES preconditioned by ``I + theta dt B`` when B is
    available.
    """
    c = cfg.theta * cfg.dt
    rhs = -cfg.dt * p.residual(u)
    if c == 0.0:
        return u + rhs
    precond = None if p.B is None else (lambda v: p.B.solve_shifted(v, c))
    d = _implicit_increment(lambda v: v + c * p.apply_A(v), rhs, precond, cfg.inner_tol)
    return u + d


def step_backward_euler_linear(
    p: SemilinearProblem, u: np.ndarray, dt: float, tau: float = 1.0, tol: float = 1e-12
) -> np.ndarray:
    """Solve ``(I + dt A) v = u + dt f`` with GMRES preconditioned by ``I + tau dt B``."""
    if not p.is_linear:
        raise ValueError("backward Euler here is for linear problems only")
    rhs = u + dt * p.forcing if p.forcing is not None else np.array(u, dtype=float)
    if dt == 0.0:
        return rhs
    precond = None if p.B is None else (lambda v: p.B.solve_shifted(v, tau * dt))
    x, _ = gmres(lambda v: v + dt * p.apply_A(v), rhs, precond=precond, x0=u, tol=tol, maxiter=2000)
    return x


def _nlrss_increment(p, u, s, tau, B_k, tol):
    rhs = -s * p.residual(u)
    c = tau * s
    if B_k is None or B_k is p.B:
        return _require_B(p).solve_shifted(rhs, c)
    if isinstance(B_k, _Preconditioner) or hasattr(B_k, "solve_shifted"):
        return B_k.solve_shifted(rhs, c)
    Bop = as_operator(B_k)
    precond = None if p.B is None else (lambda v: p.B.solve_shifted(v, c))
    return _implicit_increment(lambda v: v + c * Bop.matvec(v), rhs, precond, tol)


def step_nlrss(p: SemilinearProblem, u: np.ndarray, cfg: SchemeConfig, B_k=None) -> np.ndarray:
    """NLRSS step ``(I + tau dt B_k)(u1 - u) = -dt F(u)``.

    ``B_k`` may be anything with ``solve_shifted`` (solved directly) or a
    plain operator, in which case the solve is GMRES preconditioned by the
    problem's own ``I + tau dt B``.
    """
    return u + _nlrss_increment(p, u, cfg.dt, cfg.tau, B_k, cfg.inner_tol)


def step_extrapolated(p: SemilinearProblem, u: np.ndarray, cfg: SchemeConfig, B_k=None) -> np.ndarray:
    """Richardson-extrapolated RSS: two half steps, one full step, ``2 u2 - u3``.

    Exactly three stabilized solves.  With ``B_k`` the NLRSS operator is used,
    frozen at ``u`` for all three.
    """
    dt, tau = cfg.dt, cfg.tau
    if B_k is None and cfg.kind is not Kind.NLRSS:
        inc = lambda v, s: _rss_increment(p, v, s, tau)
    else:
        inc = lambda v, s: _nlrss_increment(p, v, s, tau, B_k, cfg.inner_tol)
    u1 = u + inc(u, 0.5 * dt)
    u2 = u1 + inc(u1, 0.5 * dt)
    u3 = u + inc(u, dt)
    return 2.0 * u2 - u3


def step(p: SemilinearProblem, u: np.ndarray, cfg: SchemeConfig, B_k=None) -> np.ndarray:
    """Dispatch on ``cfg.kind``."""
    k = cfg.kind
    if k is Kind.FORWARD_EULER:
        return step_forward_euler(p, u, cfg.dt)
    if k is Kind.BACKWARD_EULER:
        if p.is_linear:
            return step_backward_euler_linear(p, u, cfg.dt, tau=cfg.tau or 1.0, tol=cfg.inner_tol)
        return step_theta(p, u, cfg.replace(theta=1.0))
    if k is Kind.THETA:
        return step_theta(p, u, cfg)
    if cfg.extrapolate:
        return step_extrapolated(p, u, cfg, B_k)
    if k is Kind.RSS:
        return step_rss(p, u, cfg)
    return step_nlrss(p, u, cfg, B_k)


# ---------------------------------------------------------------------------
# drivers


def march(p: SemilinearProblem, u0: np.ndarray, cfg: SchemeConfig, steps: int, callback=None) -> np.ndarray:
    """Take ``steps`` fixed steps; ``callback(k, t, u)`` after each."""
    u = np.array(u0, dtype=float).ravel()
    for k in range(1, steps + 1):
        u = step(p, u, cfg)
        if callback is not None:
            callback(k, k * cfg.dt, u)
    return u


@dataclass
class SteadyStateReport:
    outcome: Outcome
    T_c: float
    steps: int
    dt: float
    residual_history: np.ndarray = field(repr=False)
    state: object = field(default=None, repr=False)
    solves_per_step: int = 1

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.CONVERGED

    @property
    def label(self) -> str:
        """Table-style cell: the time, ``***`` for blow-up, ``NC`` otherwise."""
        if self.outcome is Outcome.BLOW_UP:
            return "***"
        if self.outcome is Outcome.NOT_CONVERGED:
            return "NC"
        return f"{self.T_c:.2f}"

    @property
    def NT(self) -> float:
        """Cost model in stabilized solves: ``T_c/dt`` times solves per step."""
        return self.steps * max(self.solves_per_step, 1)


def _blown(v: np.ndarray) -> bool:
    if not np.all(np.isfinite(v)):
        return True
    return float(np.max(np.abs(v), initial=0.0)) > BLOWUP_THRESHOLD


def march_to_steady(
    advance: Callable[[object], object],
    state0,
    dt: float,
    eps: float,
    T_max: float = 2000.0,
    monitor: Callable[[object], np.ndarray] = None,
    max_steps: Optional[int] = None,
    solves_per_step: int = 1,
    progress: Optional[Callable[[int, float, float], None]] = None,
) -> SteadyStateReport:
    """Generic steady-state loop.

    ``advance(state) -> state``; ``monitor(state)`` gives the vector whose
    rate ``|(m^{k+1} - m^k)/dt|_2`` is tested against ``eps`` (defaults to
    the state itself).  Blow-up: any NaN/inf or sup norm above 1e10.
    """
    if eps <= 0 or T_max <= 0:
        raise ValueError("eps and T_max must be positive")
    mon = monitor or (lambda s: s)
    nmax = math.inf if math.isinf(T_max) else int(math.floor(T_max / dt + 1e-9))
    if max_steps is not None:
        nmax = min(nmax, max_steps)
    state = state0
    prev = np.array(mon(state), dtype=float).ravel()
    history = []
    outcome = Outcome.NOT_CONVERGED
    k = 0
    with np.errstate(all="ignore"):
        while k < nmax:
            try:
                state = advance(state)
            except (BlowUp, FloatingPointError, SolveFailure):
                outcome = Outcome.BLOW_UP
                k += 1
                history.append(np.inf)
                break
            k += 1
            cur = np.array(mon(state), dtype=float).ravel()
            if _blown(cur):
                outcome = Outcome.BLOW_UP
                history.append(np.inf)
                break
            res = float(np.linalg.norm(cur - prev) / dt)
            history.append(res)
            prev = cur
            if progress is not None:
                progress(k, k * dt, res)
            if res <= eps:
                outcome = Outcome.CONVERGED
                break
    return SteadyStateReport(
        outcome=outcome,
        T_c=k * dt,
        steps=k,
        dt=dt,
        residual_history=np.asarray(history),
        state=state,
        solves_per_step=solves_per_step,
    )


def run_to_steady(
    p: SemilinearProblem,
    u0: np.ndarray,
    cfg: SchemeConfig,
    eps: float,
    T_max: float = 2000.0,
    B_update: Optional[Callable[[np.ndarray], object]] = None,
    max_steps: Optional[int] = None,
) -> SteadyStateReport:
    """Iterate the configured scheme until ``|(u^{k+1}-u^k)/dt| <= eps``.

    ``B_update(u)`` supplies the NLRSS operator for each step.
    """

    def advance(u):
        B_k = B_update(u) if B_update is not None else None
        return step(p, u, cfg, B_k)

    return march_to_steady(
        advance,
        np.array(u0, dtype=float).ravel(),
        cfg.dt,
        eps,
        T_max=T_max,
        max_steps=max_steps,
        solves_per_step=cfg.solves_per_step,
    )
