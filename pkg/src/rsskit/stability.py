"""Analytic time-step bounds for RSS and an empirical bisector to check them.

Notation: ``alpha <Bu,u> <= <Au,u> <= beta <Bu,u>`` (computed on the
symmetric part of A), ``rho_A`` the spectral radius of A, ``delta`` the
2-norm of ``A - A^T``.  "Unconditional" is encoded as ``dt_max = inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AllUnstable, HypothesisViolated, ZeroPreconditioner
from .solvers import as_operator, dense_matrix, equivalence_bounds
from .timestep import SchemeConfig, SemilinearProblem, step

__all__ = [
    "StabilityReport",
    "UNCONDITIONAL",
    "CONDITIONAL",
    "tau_opt",
    "dtmax_linear",
    "stability_gain",
    "phi",
    "nonsymmetric_thresholds",
    "dtmax_nonsymmetric",
    "dtmax_allen_cahn",
    "empirical_dtmax",
    "is_stable_run",
    "pair_constants",
    "GAIN_CAP",
]

UNCONDITIONAL = "Unconditional"
CONDITIONAL = "Conditional"
GAIN_CAP = 1e12


@dataclass
class StabilityReport:
    regime: str
    dt_max: float
    case_label: str
    inputs: dict = field(default_factory=dict)
    hypothesis_ok: Optional[bool] = None

    def __post_init__(self):
        if self.regime == CONDITIONAL and not (0 < self.dt_max < math.inf):
            raise ValueError(f"conditional bound must be finite and positive, got {self.dt_max}")

    @property
    def unconditional(self) -> bool:
        return self.regime == UNCONDITIONAL

    @property
    def label(self) -> str:
        return "Inc. Stab." if self.unconditional else f"{self.dt_max:.6g}"

    def to_dict(self) -> dict:
        enc = lambda v: "inf" if isinstance(v, float) and math.isinf(v) else v
        return {
            "regime": self.regime,
            "dt_max": enc(float(self.dt_max)),
            "case_label": self.case_label,
            "hypothesis_ok": self.hypothesis_ok,
            "inputs": {k: enc(float(v)) if isinstance(v, (int, float)) else v for k, v in self.inputs.items()},
        }


def _unconditional(label, inputs, **kw):
    return StabilityReport(UNCONDITIONAL, math.inf, label, inputs, **kw)


# ---------------------------------------------------------------------------
# optimal scaling


def tau_opt(A, B, dense_limit: int = 4096, probes: int = 64, seed: int = 0) -> float:
    """Minimizer of ``|tau B - A|_F``: ``trace(B^T A) / |B|_F^2``.

    Dense for ``n <= dense_limit``; otherwise Hutchinson estimates of both
    traces with Rademacher probes.
    """
    Aop, Bop = as_operator(A), as_operator(B)
    n = Aop.shape[0]
    if n <= dense_limit:
        Ad, Bd = dense_matrix(A), dense_matrix(B)
        num = float(np.sum(Bd * Ad))
        den = float(np.sum(Bd * Bd))
    else:
        rng = np.random.default_rng(seed)
        num = den = 0.0
        for _ in range(probes):
            z = rng.choice((-1.0, 1.0), size=n)
            bz = Bop.matvec(z)
            num += float(bz @ Aop.matvec(z))
            den += float(bz @ bz)
    if den == 0.0:
        raise ZeroPreconditioner("B is the zero operator")
    return num / den


# ---------------------------------------------------------------------------
# symmetric case


def dtmax_linear(tau: float, beta: float, rho_A: float) -> StabilityReport:
    """``tau >= beta/2``: unconditional; else ``dt < 2 / ((1 - 2 tau/beta) rho_A)``."""
    if beta <= 0 or rho_A <= 0 or tau < 0:
        raise ValueError("need beta > 0, rho_A > 0, tau >= 0")
    inputs = {"tau": tau, "beta": beta, "rho_A": rho_A}
    if tau >= beta / 2:
        return _unconditional("tau>=beta/2", inputs)
    return StabilityReport(CONDITIONAL, 2.0 / ((1.0 - 2.0 * tau / beta) * rho_A), "tau<beta/2", inputs)


def stability_gain(tau: float, beta: float) -> float:
    """Ratio to the forward-Euler limit, ``1/(1 - 2 tau/beta)``; inf past ``beta/2``."""
    if tau >= beta / 2:
        return math.inf
    k = 1.0 / (1.0 - 2.0 * tau / beta)
    return math.inf if k > GAIN_CAP else k


# ---------------------------------------------------------------------------
# nonsymmetric A


def phi(xi, tau, alpha, beta, delta):
    return (beta**2 - 2 * alpha * tau) * xi + delta**2 / (4 * xi)


def nonsymmetric_thresholds(alpha, beta, lmin_B, lmax_B, delta) -> tuple[float, float, float]:
    """Branch boundaries ``(t1, t2, t3)`` in tau.

    ``t1``: below it Phi is increasing on the spectrum of B; ``t2``: above it
    Phi is decreasing; ``t3``: above it Phi <= 0 everywhere.
    """
    base = beta**2 / (2 * alpha)
    t1 = base - delta**2 / (8 * alpha * lmin_B**2)
    t2 = base - delta**2 / (8 * alpha * lmax_B**2)
    t3 = base + delta**2 / (8 * alpha * lmin_B**2)
    return t1, t2, t3


def dtmax_nonsymmetric(
    tau: float,
    alpha: float,
    beta: float,
    lmin_B: float,
    lmax_B: float,
    delta: float,
    strict: bool = True,
) -> StabilityReport:
    """Sufficient RSS bound for nonsymmetric A and SPD B.

    Stability holds when ``dt * Phi(xi) < 2 alpha`` over ``xi`` in the
    spectrum interval of B.  Branches:

    i.   tau >= t3           unconditional
    ii.  tau <= t1           dt < 2 alpha / Phi(lmax_B)
    iii. t2 <= tau < t3      dt < 2 alpha / Phi(lmin_B)
    iv.  t1 < tau < t2       dt < 2 alpha / max(Phi(lmin_B), Phi(lmax_B))

    The branch-ii boundary is taken at ``lmin_B`` (where Phi' changes sign
    first), so every branch is the maximum of the convex Phi over the
    interval and the bound is continuous in tau.  ``strict`` raises
    ``HypothesisViolated`` when ``beta^2/(2 alpha) - delta^2/(8 alpha lmin_B^2) < 0``;
    otherwise the flag is reported and the bound still returned.
    """
    if min(alpha, beta, lmin_B, lmax_B) <= 0 or delta < 0 or tau < 0:
        raise ValueError("need alpha, beta, lambda_min(B), lambda_max(B) > 0 and delta, tau >= 0")
    if lmin_B > lmax_B:
        raise ValueError("lambda_min(B) exceeds lambda_max(B)")
    t1, t2, t3 = nonsymmetric_thresholds(alpha, beta, lmin_B, lmax_B, delta)
    ok = t1 >= 0
    inputs = {
        "tau": tau, "alpha": alpha, "beta": beta, "lmin_B": lmin_B, "lmax_B": lmax_B,
        "delta": delta, "t1": t1, "t2": t2, "t3": t3,
    }
    if strict and not ok:
        raise HypothesisViolated(
            f"beta^2/(2 alpha) - delta^2/(8 alpha lmin_B^2) = {t1:.4g} < 0"
        )
    p_lo = phi(lmin_B, tau, alpha, beta, delta)
    p_hi = phi(lmax_B, tau, alpha, beta, delta)
    if tau >= t3 or max(p_lo, p_hi) <= 0:
        return _unconditional("i", inputs, hypothesis_ok=ok)
    if tau <= t1:
        label, worst = "ii", p_hi
    elif tau >= t2:
        label, worst = "iii", p_lo
    else:
        label, worst = "iv", max(p_lo, p_hi)
    return StabilityReport(CONDITIONAL, 2 * alpha / worst, label, inputs, hypothesis_ok=ok)


# ---------------------------------------------------------------------------
# Allen-Cahn


def dtmax_allen_cahn(tau, beta, lmin_A, rho_A, L, eps) -> StabilityReport:
    """Energy-stability bound for RSS on ``du/dt + A u + f(u)/eps^2 = 0``, ``|f'| <= L``."""
    if beta <= 0 or eps <= 0 or L < 0 or lmin_A < 0 or rho_A <= 0 or tau < 0:
        raise ValueError("invalid Allen-Cahn stability inputs")
    inputs = {"tau": tau, "beta": beta, "lmin_A": lmin_A, "rho_A": rho_A, "L": L, "eps": eps}
    nl = L / (2 * eps**2)
    s = tau / beta - 0.5
    if tau >= beta / 2:
        if s * lmin_A - nl >= 0:
            return _unconditional("1", inputs)
        return StabilityReport(CONDITIONAL, 1.0 / (nl - s * lmin_A), "2", inputs)
    return StabilityReport(CONDITIONAL, 1.0 / (nl - s * rho_A), "3", inputs)


# ---------------------------------------------------------------------------
# empirical check


def is_stable_run(p: SemilinearProblem, cfg: SchemeConfig, u0: np.ndarray, steps: int = 500, growth: float = 10.0) -> bool:
    """March ``steps`` steps; unstable on NaN/inf or ``|u| > growth |u0|``."""
    u = np.array(u0, dtype=float)
    n0 = np.linalg.norm(u)
    limit = growth * n0
    with np.errstate(all="ignore"):
        for _ in range(steps):
            u = step(p, u, cfg)
            nu = np.linalg.norm(u)
            if not np.isfinite(nu) or nu > limit:
                return False
    return True


def empirical_dtmax(
    p: SemilinearProblem,
    cfg: SchemeConfig,
    dt_hi: float,
    dt_lo: float = 1e-6,
    steps: int = 500,
    rel_width: float = 1e-2,
    u0: Optional[np.ndarray] = None,
    seed: int = 0,
    growth: float = 10.0,
) -> float:
    """Largest stable ``dt`` in ``[dt_lo, dt_hi]`` found by bisection.

    The run uses the homogeneous problem (forcing dropped) from a random
    start.  Returns ``dt_hi`` when no instability is found there.
    """
    hp = p if p.forcing is None else SemilinearProblem(p.A, p.B, p.f_nl, None)
    if u0 is None:
        u0 = np.random.default_rng(seed).standard_normal(hp.n)
    stable = lambda dt: is_stable_run(hp, cfg.replace(dt=dt), u0, steps, growth)
    if not stable(dt_lo):
        raise AllUnstable(f"unstable already at dt={dt_lo:g}")
    if stable(dt_hi):
        return dt_hi
    lo, hi = dt_lo, dt_hi
    while hi - lo > rel_width * lo:
        mid = math.sqrt(lo * hi) if hi > 4 * lo else 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def pair_constants(A, B) -> dict:
    """alpha, beta, rho_A, extreme eigenvalues of B and delta for an (A, B) pair."""
    Ad = dense_matrix(A)
    Bd = dense_matrix(B)
    alpha, beta = equivalence_bounds(Ad, Bd)
    Bs = 0.5 * (Bd + Bd.T)
    eB = np.linalg.eigvalsh(Bs)
    eA = np.linalg.eigvals(Ad)
    return {
        "alpha": float(alpha),
        "beta": float(beta),
        "rho_A": float(np.max(np.abs(eA))),
        "lmin_A": float(np.min(eA.real)),
        "lmin_B": float(eB[0]),
        "lmax_B": float(eB[-1]),
        "delta": float(np.linalg.norm(Ad - Ad.T, 2)),
        "tau_opt": float(tau_opt(Ad, Bd)),
    }
