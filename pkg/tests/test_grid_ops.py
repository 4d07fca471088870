from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsskit.errors import DimensionMismatch, GridTooSmall
from rsskit.grid_ops import (
    NEUMANN,
    Grid1D,
    Grid2D,
    Grid3D,
    KronSumOperator,
    apply,
    build_compact_d1,
    build_compact_d2,
    build_fd2_d1,
    build_fd2_d2,
    dense_kron_sum,
    kron_sum_2d,
    kron_sum_3d,
)


def _err(op, f, df, n):
    g = Grid1D(n)
    return np.max(np.abs(op(g).apply(f(g.nodes)) - df(g.nodes)))


def two_grid_ratio(op, f, df, n=32):
    return _err(op, f, df, n) / _err(op, f, df, 2 * n)


# -- grids ------------------------------------------------------------------


def test_grid1d_cavity_convention():
    g = Grid1D(63)
    assert g.h == pytest.approx(1 / 64)
    assert g.nodes[0] == pytest.approx(1 / 64) and g.nodes[-1] == pytest.approx(63 / 64)


def test_grid2d_ordering_is_x_fastest():
    g = Grid2D(Grid1D(4), Grid1D(3))
    assert g.shape == (3, 4)
    X, Y = g.mesh()
    assert np.all(np.diff(X, axis=1) > 0) and np.all(np.diff(Y, axis=0) > 0)
    assert g.size == 12


def test_grid3d_cube():
    g = Grid3D.cube(5)
    assert g.shape == (5, 5, 5)


# -- exact coefficients -----------------------------------------------------


def test_compact_d1_coefficients_exact():
    g = Grid1D(6)
    op = build_compact_d1(g)
    row = op.Q.toarray()[0, :4] * 2 * g.h
    expect = [float(Fraction(c)) for c in ("-2", "3", "-2/3", "1/8")]
    assert np.allclose(row, expect, rtol=0, atol=1e-15)
    last = op.Q.toarray()[-1, -4:] * 2 * g.h
    assert np.allclose(last, [-c for c in reversed(expect)], atol=1e-15)
    P = op.P.toarray()
    assert P[1, 0] == 0.25 and P[1, 1] == 1.0 and P[1, 2] == 0.25
    assert op.approximates == "+d/dx"


def test_compact_d2_dirichlet_coefficients_exact():
    g = Grid1D(9)
    op = build_compact_d2(g)
    printed = (Fraction(-67, 60), Fraction(-7, 12), Fraction(13, 10), Fraction(-61, 120), Fraction(1, 12))
    assert op.boundary_coefficients == printed
    # stored with the interior sign convention (approximates -d2/dx2)
    row = op.Q.toarray()[0, :5]
    assert np.allclose(row * g.h**2, [-float(c) for c in printed], rtol=1e-15, atol=0)
    interior = op.Q.toarray()[4, 3:6] * g.h**2
    assert np.allclose(interior, [-1.2, 2.4, -1.2], atol=1e-14)
    assert op.P.toarray()[4, 3] == 0.1


def test_compact_d2_neumann_coefficients_exact():
    op = build_compact_d2(Grid1D(9, bc=NEUMANN))
    printed = (Fraction(2681, 480), Fraction(-32, 3), Fraction(113, 40), Fraction(-13, 15), Fraction(59, 480))
    assert op.boundary_coefficients == printed
    assert np.allclose(op.Q.toarray()[0, :5] * op.h**2, [-float(c) for c in printed], atol=1e-12)


def test_grid_too_small():
    with pytest.raises(GridTooSmall):
        build_compact_d1(Grid1D(3))
    with pytest.raises(GridTooSmall):
        build_compact_d2(Grid1D(4))
    with pytest.raises(GridTooSmall):
        build_fd2_d2(Grid1D(1))


# -- small exact cases ------------------------------------------------------


def test_fd2_d2_small():
    op = build_fd2_d2(Grid1D(3, h=0.25))
    M = op.to_dense()
    assert np.allclose(np.diag(M), 32) and np.allclose(np.diag(M, 1), -16)
    assert np.array_equal(M, M.T)


def test_fd2_d2_spectrum():
    g = Grid1D(31)
    ev = np.sort(np.linalg.eigvalsh(build_fd2_d2(g).to_dense()))
    k = np.arange(1, 32)
    assert np.allclose(ev, np.sort(4 / g.h**2 * np.sin(k * np.pi * g.h / 2) ** 2), rtol=1e-12)


def test_fd2_d2_quadratic_exact():
    g = Grid1D(10)
    x = g.nodes
    assert np.allclose(build_fd2_d2(g).apply(x * (1 - x)), 2.0, atol=1e-10)


def test_fd2_d1_exact_on_linears_and_constants():
    g = Grid1D(10)
    op = build_fd2_d1(g)
    assert np.allclose(op.apply(np.ones(10)), 0, atol=1e-12)
    assert np.allclose(op.apply(g.nodes), 1, atol=1e-12)


def test_compact_d1_constant_annihilated():
    op = build_compact_d1(Grid1D(12))
    c = np.full(12, 3.0)
    assert np.allclose(op.apply(c, left=3.0, right=3.0), 0, atol=1e-10)


def test_compact_d2_zero():
    assert np.array_equal(build_compact_d2(Grid1D(8)).apply(np.zeros(8)), np.zeros(8))


def test_compact_d1_quadratic():
    g = Grid1D(40)
    x = g.nodes
    # x(1-x) vanishes on both walls, derivative 1-2x
    assert np.max(np.abs(build_compact_d1(g).apply(x * (1 - x)) - (1 - 2 * x))) < 1e-10


def test_compact_d2_sine_sign():
    g = Grid1D(64)
    u = np.sin(np.pi * g.nodes)
    assert np.max(np.abs(build_compact_d2(g).apply(u) - np.pi**2 * u)) < 1e-4


# -- orders of accuracy ------------------------------------------------------


def test_compact_d1_fourth_order():
    r = two_grid_ratio(build_compact_d1, lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x))
    assert 12 <= r <= 20


def test_fd2_orders():
    r2 = two_grid_ratio(build_fd2_d2, lambda x: np.sin(np.pi * x), lambda x: np.pi**2 * np.sin(np.pi * x))
    r1 = two_grid_ratio(build_fd2_d1, lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x))
    assert 3.4 <= r2 <= 4.6
    assert 3.4 <= r1 <= 4.6


def test_compact_d2_fourth_order_asymptotic():
    # the boundary row's O(h^5) term dominates at coarse n; fourth order shows at finer grids
    f = lambda x: np.sin(np.pi * x)
    r = two_grid_ratio(build_compact_d2, f, lambda x: np.pi**2 * f(x), n=128)
    assert 12 <= r <= 20


def test_compact_d2_solve_fourth_order():
    errs = []
    for n in (32, 64):
        g = Grid1D(n)
        u = np.sin(np.pi * g.nodes)
        A = build_compact_d2(g).to_dense()
        errs.append(np.max(np.abs(np.linalg.solve(A, np.pi**2 * u) - u)))
    assert 12 <= errs[0] / errs[1] <= 20


def test_compact_d2_nonsymmetric():
    A = build_compact_d2(Grid1D(15)).to_dense()
    delta = np.linalg.norm(A - A.T, 2)
    assert 0 < delta < np.inf


# -- Kronecker sums ----------------------------------------------------------


def test_kron_2d_laplacian_sine():
    n = 64
    g = Grid2D.square(n)
    op = build_compact_d2(Grid1D(n))
    A = kron_sum_2d(op, op, g)
    X, Y = g.mesh()
    u = np.sin(np.pi * X) * np.sin(np.pi * Y)
    assert np.max(np.abs(A.apply_field(u) - 2 * np.pi**2 * u)) < 1e-3


def test_kron_zero_x_operator():
    g = Grid2D(Grid1D(5), Grid1D(6))
    opy = build_compact_d2(g.gy)
    A = kron_sum_2d(None, opy, g)
    u = np.random.default_rng(0).standard_normal(g.shape)
    assert np.allclose(A.apply_field(u), opy.apply(u, axis=0))


def test_kron_dimension_mismatch():
    g = Grid2D(Grid1D(5), Grid1D(6))
    with pytest.raises(DimensionMismatch):
        kron_sum_2d(build_compact_d2(Grid1D(6)), build_compact_d2(Grid1D(6)), g)


def test_kron_3d_matches_dense():
    g = Grid3D.cube(5)
    op = build_compact_d2(Grid1D(5))
    A = kron_sum_3d(op, op, op, g)
    v = np.random.default_rng(1).standard_normal(125)
    assert np.allclose(A.matvec(v), A.to_dense() @ v, rtol=1e-12, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(5, 6), ny=st.integers(5, 6), seed=st.integers(0, 2**31 - 1), compact=st.booleans())
def test_kron_matches_dense_oracle(nx, ny, seed, compact):
    g = Grid2D(Grid1D(nx), Grid1D(ny))
    b = build_compact_d2 if compact else build_fd2_d2
    ox, oy = b(g.gx), b(g.gy)
    A = kron_sum_2d(ox, oy, g)
    # independent oracle: explicit np.kron assembly
    D = np.kron(oy.to_dense(), np.eye(nx)) + np.kron(np.eye(ny), ox.to_dense())
    v = np.random.default_rng(seed).standard_normal(nx * ny)
    assert np.allclose(A.matvec(v), D @ v, rtol=1e-12, atol=1e-12 * np.abs(D @ v).max())
    assert np.allclose(dense_kron_sum(A.ops, A.field_shape), D)


def test_small_kron_n3_oracle():
    g = Grid2D.square(3)
    op = build_fd2_d2(Grid1D(3))
    A = kron_sum_2d(op, op, g)
    D = np.kron(op.to_dense(), np.eye(3)) + np.kron(np.eye(3), op.to_dense())
    v = np.arange(9.0)
    assert np.allclose(apply(A, v), D @ v, atol=1e-13 * np.abs(D @ v).max())


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_apply_is_linear(a, b, seed):
    op = build_compact_d2(Grid1D(11))
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(11), rng.standard_normal(11)
    lhs = op.apply(a * u + b * v)
    rhs = a * op.apply(u) + b * op.apply(v)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


def test_kron_operator_is_matrix_free():
    g = Grid2D.square(127)
    op = build_compact_d2(Grid1D(127))
    A = KronSumOperator((op, op), g.shape)
    assert A.shape == (127**2, 127**2)
    assert np.isfinite(A.matvec(np.ones(127**2))).all()
