"""Linear algebra kernels.

Banded LU factorizations (LAPACK ``gbtrf``/``gbtrs``), a sine-transform
solver for the second-order Dirichlet Laplacian on tensor grids, restarted
GMRES (left or right preconditioned), and eigenvalue estimators used by the stability
module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import (
    DimensionMismatch,
    MaxIterationsExceeded,
    NoConvergence,
    SingularMatrix,
)

__all__ = [
    "BandedFactorization",
    "banded_factor",
    "banded_solve",
    "FastPoissonContext",
    "fast_poisson_solve",
    "KrylovStats",
    "gmres",
    "spectral_radius",
    "min_eigen",
    "equivalence_bounds",
    "as_operator",
    "dense_matrix",
]


# ---------------------------------------------------------------------------
# operator helpers


def as_operator(A) -> spla.LinearOperator:
    """Wrap a dense array, sparse matrix, callable or LinearOperator."""
    if isinstance(A, spla.LinearOperator):
        return A
    if sp.issparse(A) or isinstance(A, np.ndarray):
        return spla.aslinearoperator(A)
    if hasattr(A, "as_linear_operator"):
        return A.as_linear_operator()
    raise TypeError(f"cannot interpret {type(A).__name__} as a linear operator")


def dense_matrix(A) -> np.ndarray:
    """Assemble a dense copy of ``A`` column by column (small problems only)."""
    if isinstance(A, np.ndarray):
        return np.array(A, dtype=float)
    if sp.issparse(A):
        return A.toarray()
    if hasattr(A, "to_dense"):
        return A.to_dense()
    op = as_operator(A)
    n = op.shape[1]
    return op.matmat(np.eye(n))


# ---------------------------------------------------------------------------
# banded factorization


@dataclass(frozen=True)
class BandedFactorization:
    """LU factors of a square banded matrix in LAPACK band storage."""

    lu: np.ndarray
    ipiv: np.ndarray
    kl: int
    ku: int
    n: int

    @property
    def bandwidth(self) -> int:
        return self.kl + self.ku + 1

    def solve(self, b: np.ndarray) -> np.ndarray:
        return banded_solve(self, b)


def _bandwidths(M: sp.spmatrix) -> tuple[int, int]:
    coo = M.tocoo()
    if coo.nnz == 0:
        return 0, 0
    offs = coo.col - coo.row
    return int(max(0, -offs.min())), int(max(0, offs.max()))


def banded_factor(M, kl: Optional[int] = None, ku: Optional[int] = None) -> BandedFactorization:
    """Factor a square banded matrix ``M`` (dense or sparse)."""
    M = sp.csr_matrix(M)
    n, m = M.shape
    if n != m:
        raise DimensionMismatch(f"matrix must be square, got {M.shape}")
    if kl is None or ku is None:
        kl_, ku_ = _bandwidths(M)
        kl = kl_ if kl is None else kl
        ku = ku_ if ku is None else ku
    # gbtrf needs kl extra rows on top for fill-in from pivoting
    ab = np.zeros((2 * kl + ku + 1, n), order="F")
    coo = M.tocoo()
    ab[kl + ku + coo.row - coo.col, coo.col] = coo.data
    lu, ipiv, info = lapack.dgbtrf(ab, kl, ku, overwrite_ab=1)
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    scale = max(np.abs(coo.data).max(initial=0.0), 1e-300)
    pivots = np.abs(lu[kl + ku, :])
    if info > 0 or pivots.min() < 1e-14 * scale:
        raise SingularMatrix(f"zero pivot in banded factorization (min |u_ii| = {pivots.min():.3e})")
    return BandedFactorization(lu=lu, ipiv=ipiv, kl=kl, ku=ku, n=n)


def banded_solve(F: BandedFactorization, b: np.ndarray) -> np.ndarray:
    """Solve ``M x = b`` given ``F = banded_factor(M)``; ``b`` may hold several columns."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.n:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has {F.n}")
    vec = b.ndim == 1
    rhs = np.asfortranarray(b.reshape(F.n, -1))
    x, info = lapack.dgbtrs(F.lu, F.kl, F.ku, rhs, F.ipiv)
    if info != 0:
        raise ValueError(f"dgbtrs failed with info={info}")
    return x[:, 0] if vec else x.reshape(b.shape)


# ---------------------------------------------------------------------------
# fast sine-transform solver for the 2nd-order Dirichlet Laplacian


def laplacian_eigenvalues(n: int, h: float) -> np.ndarray:
    """Spectrum of tridiag(-1, 2, -1)/h^2 of size n: ``(4/h^2) sin^2(k pi / (2(n+1)))``."""
    k = np.arange(1, n + 1)
    return 4.0 / h**2 * np.sin(k * np.pi / (2 * (n + 1))) ** 2


@dataclass(frozen=True)
class FastPoissonContext:
    """Precomputed data to invert ``sigma*Id + A2`` on a tensor grid.

    ``shape`` is the array shape of a field (slowest axis first) and ``h`` the
    mesh width along each of those axes.  The DST-I diagonalizes every 1D
    factor, so a solve costs two transforms and one pointwise division.
    """

    shape: tuple[int, ...]
    h: tuple[float, ...]
    eigenvalues: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, shape: Sequence[int], h: Sequence[float]) -> "FastPoissonContext":
        shape = tuple(int(s) for s in shape)
        h = tuple(float(v) for v in h)
        if len(shape) != len(h):
            raise DimensionMismatch("shape and h must have the same length")
        lam = np.zeros(shape)
        for ax, (n, hh) in enumerate(zip(shape, h)):
            e = laplacian_eigenvalues(n, hh)
            bshape = [1] * len(shape)
            bshape[ax] = n
            lam = lam + e.reshape(bshape)
        return cls(shape=shape, h=h, eigenvalues=lam)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def forward(self, u: np.ndarray) -> np.ndarray:
        return scipy.fft.dstn(u, type=1, norm="ortho")

    def solve(self, rhs: np.ndarray, shift: float = 0.0) -> np.ndarray:
        return fast_poisson_solve(self, rhs, shift)

    def solve_scaled(self, rhs: np.ndarray, coef: float) -> np.ndarray:
        """Solve ``(Id + coef*A2) x = rhs``."""
        flat = np.ndim(rhs) == 1
        r = np.reshape(rhs, self.shape)
        rh = scipy.fft.dstn(r, type=1, norm="ortho")
        rh /= 1.0 + coef * self.eigenvalues
        x = scipy.fft.idstn(rh, type=1, norm="ortho")
        return x.ravel() if flat else x

    def apply(self, u: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """Matvec with ``shift*Id + A2`` through the transform (test helper)."""
        flat = np.ndim(u) == 1
        uh = scipy.fft.dstn(np.reshape(u, self.shape), type=1, norm="ortho")
        y = scipy.fft.idstn(uh * (shift + self.eigenvalues), type=1, norm="ortho")
        return y.ravel() if flat else y


def fast_poisson_solve(ctx: FastPoissonContext, rhs: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """Solve ``(shift*Id + A2) x = rhs`` by sine-transform diagonalization."""
    if shift < 0:
        raise ValueError("shift must be non-negative")
    if np.size(rhs) != ctx.size:
        raise DimensionMismatch(f"rhs has {np.size(rhs)} entries, grid has {ctx.size}")
    flat = np.ndim(rhs) == 1
    rh = scipy.fft.dstn(np.reshape(rhs, ctx.shape), type=1, norm="ortho")
    rh /= shift + ctx.eigenvalues
    x = scipy.fft.idstn(rh, type=1, norm="ortho")
    return x.ravel() if flat else x


# ---------------------------------------------------------------------------
# GMRES


@dataclass
class KrylovStats:
    iterations: int
    final_residual: float
    converged: bool
    restarts: int = 0
    residual_history: list = field(default_factory=list, repr=False)


def _matvec(A) -> Callable[[np.ndarray], np.ndarray]:
    if callable(A) and not isinstance(A, (np.ndarray, spla.LinearOperator)) and not sp.issparse(A):
        return A
    op = as_operator(A)
    return op.matvec


def gmres(
    A,
    b: np.ndarray,
    precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    restart: int = 30,
    maxiter: int = 1000,
    raise_on_failure: bool = True,
    side: str = "right",
) -> tuple[np.ndarray, KrylovStats]:
    """Restarted GMRES with right or left preconditioning.

    Solves ``A x = b`` where ``precond(v)`` approximates ``A^{-1} v``.  With
    ``side="right"`` the stopping test is on the true relative residual
    ``|b - A x| <= tol |b|``.  With ``side="left"`` GMRES runs on
    ``M A x = M b`` and the test is on the preconditioned residual
    ``|M(b - A x)| <= tol |M b|``.  ``iterations`` counts Krylov steps,
    i.e. applications of ``A``.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if side == "left" and precond is not None:
        inner = _matvec(A)
        return gmres(
            lambda v: precond(inner(v)),
            precond(np.asarray(b, dtype=float).ravel()),
            x0=x0, tol=tol, restart=restart, maxiter=maxiter,
            raise_on_failure=raise_on_failure,
        )
    matvec = _matvec(A)
    M = precond if precond is not None else (lambda v: v)
    b = np.asarray(b, dtype=float).ravel()
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).ravel()
    bnorm = np.linalg.norm(b)
    history: list[float] = []
    if bnorm == 0.0:
        return np.zeros(n), KrylovStats(0, 0.0, True, 0, [0.0])
    target = tol * bnorm

    r = b - matvec(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    history.append(beta / bnorm)
    total = 0
    restarts = 0
    while True:
        if beta <= target:
            return x, KrylovStats(total, beta / bnorm, True, restarts, history)
        if total >= maxiter:
            break
        m = min(restart, maxiter - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            Z[k] = M(V[k])
            w = np.array(matvec(Z[k]), dtype=float)  # copy: operators may alias their input
            total += 1
            # modified Gram-Schmidt, one reorthogonalization pass
            for _ in range(2):
                for j in range(k + 1):
                    hij = np.dot(V[j], w)
                    H[j, k] += hij
                    w -= hij * V[j]
            H[k + 1, k] = np.linalg.norm(w)
            breakdown = H[k + 1, k] <= 1e-14 * abs(H[k, k])
            if not breakdown:
                V[k + 1] = w / H[k + 1, k]
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            denom = math.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = (1.0, 0.0) if denom == 0.0 else (H[k, k] / denom, H[k + 1, k] / denom)
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            history.append(abs(g[k + 1]) / bnorm)
            if abs(g[k + 1]) <= target or breakdown:
                break
        y = scipy.linalg.solve_triangular(H[:k_used, :k_used], g[:k_used])
        x = x + Z[:k_used].T @ y
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        restarts += 1
        history[-1] = beta / bnorm
    stats = KrylovStats(total, beta / bnorm, beta <= target, restarts, history)
    if not stats.converged and raise_on_failure:
        raise MaxIterationsExceeded(
            f"GMRES did not reach tol={tol:g} in {maxiter} iterations (residual {stats.final_residual:.3e})"
        )
    return x, stats


# ---------------------------------------------------------------------------
# eigenvalue estimators


def spectral_radius(A, tol: float = 1e-6, maxiter: int = 20000, seed: int = 0) -> float:
    """Largest eigenvalue magnitude by power iteration.

    Assumes a dominant real eigenvalue.  Convergence is declared when the
    Rayleigh-quotient estimate changes by less than ``tol`` (relative).
    """
    op = as_operator(A)
    matvec = op.matvec
    n = op.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = matvec(v)
        new = np.linalg.norm(w)
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            # one more Rayleigh refinement
            return float(abs(np.dot(v, matvec(v))))
        lam = new
    raise NoConvergence(f"power iteration stalled after {maxiter} steps")


def min_eigen(A, solve: Callable[[np.ndarray], np.ndarray], tol: float = 1e-6, maxiter: int = 20000, seed: int = 0) -> float:
    """Smallest eigenvalue by inverse iteration, ``solve(b)`` applying ``A^{-1}``."""
    op = as_operator(A)
    matvec = op.matvec
    n = op.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(maxiter):
        w = solve(v)
        new = np.linalg.norm(w)
        v = w / new
        if abs(new - mu) <= tol * new:
            return float(np.dot(v, matvec(v)))
        mu = new
    raise NoConvergence(f"inverse iteration stalled after {maxiter} steps")


def equivalence_bounds(A, B, dense_limit: int = 2000, tol: float = 1e-10) -> tuple[float, float]:
    """Best constants with ``alpha <Bu,u> <= <Au,u> <= beta <Bu,u>``.

    Extreme eigenvalues of the pencil ``(sym(A), B)``.  Small problems are
    assembled and solved densely; larger ones go through Lanczos on the
    B-self-adjoint operator ``B^{-1} sym(A)``.
    """
    opA = as_operator(A)
    opB = as_operator(B)
    n = opA.shape[0]
    if opB.shape != opA.shape:
        raise DimensionMismatch(f"A is {opA.shape}, B is {opB.shape}")
    if n <= dense_limit:
        Ad = dense_matrix(A)
        Bd = dense_matrix(B)
        S = 0.5 * (Ad + Ad.T)
        Bs = 0.5 * (Bd + Bd.T)
        try:
            w = scipy.linalg.eigh(S, Bs, eigvals_only=True)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("B is not positive definite") from exc
        return float(w[0]), float(w[-1])

    sym = spla.LinearOperator(
        (n, n), matvec=lambda u: 0.5 * (opA.matvec(u) + opA.rmatvec(u)), dtype=float
    )
    Bcsc = sp.csc_matrix(dense_matrix(B)) if not sp.issparse(B) else sp.csc_matrix(B)
    lu = spla.splu(Bcsc)
    Minv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    try:
        hi = spla.eigsh(sym, k=1, M=Bcsc, Minv=Minv, which="LA", tol=tol, return_eigenvectors=False)
        lo = spla.eigsh(sym, k=1, M=Bcsc, Minv=Minv, which="SA", tol=tol, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(str(exc)) from exc
    return float(lo[0]), float(hi[0])
