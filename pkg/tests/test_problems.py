import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsskit.grid_ops import Grid1D, Grid2D
from rsskit.problems import (
    AllenCahnProblem,
    ac_energy,
    ac_F,
    ac_f,
    ac_residual,
    heat_manufactured,
    heat_problem,
    lipschitz_bound,
    run_allen_cahn,
    shen_stabilized_step,
)
from rsskit.solvers import equivalence_bounds
from rsskit.stability import dtmax_allen_cahn, dtmax_linear
from rsskit.timestep import SchemeConfig, step


def test_heat_manufactured_initial_and_decay():
    g = Grid1D(31)
    assert np.allclose(heat_manufactured(g, 0.0), np.sin(np.pi * g.nodes))
    assert np.max(np.abs(heat_manufactured(g, 50.0))) < 1e-200
    g2 = Grid2D.square(7)
    X, Y = g2.mesh()
    assert np.allclose(heat_manufactured(g2, 0.1), np.exp(-2 * np.pi**2 * 0.1) * (np.sin(np.pi * X) * np.sin(np.pi * Y)).ravel())


def test_heat_one_step_error_small():
    p = heat_problem(63)
    u1 = step(p, p.exact(0.0), SchemeConfig(tau=1, dt=1e-3))
    err = np.max(np.abs(u1 - p.exact(1e-3)))
    # local error O(dt^2) per step plus O(h^4)
    assert err < 1e-4


@pytest.mark.parametrize("pre", ["second_order", "diagonal", "identity"])
def test_heat_decay_monotone(pre):
    p = heat_problem(31, preconditioner=pre)
    A = p.A.to_dense()
    B = p.B.to_dense()
    _, beta = equivalence_bounds(A, B)
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    for tau in (0.0, beta / 4):
        dt = 0.9 * dtmax_linear(tau, beta, rho).dt_max
        u = p.exact(0.0)
        n0 = np.linalg.norm(u)
        for _ in range(50):
            v = step(p, u, SchemeConfig(tau=tau, dt=dt))
            assert np.linalg.norm(v) <= np.linalg.norm(u) * (1 + 1e-12)
            u = v
        assert np.linalg.norm(u) < n0


def test_heat_2d_problem():
    p = heat_problem(15, dim=2)
    u = step(p, p.exact(0.0), SchemeConfig(tau=1, dt=1e-3))
    assert np.max(np.abs(u - p.exact(1e-3))) < 1e-3


def test_heat_bad_inputs():
    with pytest.raises(ValueError):
        heat_problem(15, dim=3)
    with pytest.raises(ValueError):
        heat_problem(15, preconditioner="ilu")


# -- Allen-Cahn ----------------------------------------------------------------


def test_primitive_and_lipschitz():
    assert ac_F(0.0) == 0.0
    u = np.linspace(-3, 3, 1001)
    assert np.all(ac_F(u) + 0.25 >= -1e-15)
    assert lipschitz_bound(0.0) == 2.0
    assert lipschitz_bound(0.1) == pytest.approx(2.63)
    # F' = f
    h = 1e-6
    assert np.allclose((ac_F(u + h) - ac_F(u - h)) / (2 * h), ac_f(u), atol=1e-6)


def test_ac_residual_equilibria():
    p = AllenCahnProblem(eps=0.1, n=16)
    assert np.array_equal(ac_residual(p, np.zeros(16)), np.zeros(16))
    assert np.allclose(ac_residual(p, np.ones(16)), 0, atol=1e-12)
    assert np.allclose(ac_residual(p, -np.ones(16)), 0, atol=1e-12)


def test_ac_residual_dense_oracle():
    p = AllenCahnProblem(eps=0.2, n=8)
    h = 1 / 8
    A = (np.diag(np.full(8, 2.0)) - np.diag(np.ones(7), 1) - np.diag(np.ones(7), -1)) / h**2
    A[0, 0] = A[-1, -1] = 1 / h**2
    u = np.random.default_rng(0).standard_normal(8)
    assert np.allclose(ac_residual(p, u), A @ u + (u**3 - u) / 0.04, rtol=1e-13)


def test_ac_energy_values():
    p = AllenCahnProblem(eps=0.1, n=20)
    assert ac_energy(p, np.zeros(20)) == 0.0
    assert ac_energy(p, np.ones(20)) == pytest.approx(20 * (-0.25) / 0.01)
    u = np.random.default_rng(1).standard_normal(20)
    Au = p.A @ u
    ref = 0.5 * sum(a * b for a, b in zip(Au, u)) + sum(x**4 / 4 - x**2 / 2 for x in u) / 0.01
    assert ac_energy(p, u) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("eq", [0.0, 1.0, -1.0])
def test_equilibria_fixed_points(eq):
    p = AllenCahnProblem(eps=0.05, n=63)
    u = np.full(63, eq)
    v = step(p.semilinear("diagonal"), u, SchemeConfig(tau=2, dt=1e-3))
    assert np.allclose(v, u, atol=1e-12)


def test_shen_backward_euler_degeneration():
    p = AllenCahnProblem(eps=1.0, n=10)
    u = np.random.default_rng(2).standard_normal(10)
    # S = 0: backward Euler on the linear part, f explicit
    dt = 0.1
    got = shen_stabilized_step(p, u, 0.0, dt)
    ref = np.linalg.solve(np.eye(10) + dt * p.A.toarray(), u - dt * ac_f(u))
    assert np.allclose(got, ref, rtol=1e-12)


def test_shen_scalar_closed_form():
    p = AllenCahnProblem(eps=0.5, n=5)
    u = np.full(5, 0.3)  # constant: A u = 0, so every entry follows the scalar recursion
    S, dt = 1.2, 0.05
    s = 1 + S * dt / 0.25
    expect = (s * 0.3 - dt / 0.25 * (0.3**3 - 0.3)) / s
    assert np.allclose(shen_stabilized_step(p, u, S, dt), expect, rtol=1e-13)
    with pytest.raises(ValueError):
        shen_stabilized_step(p, u, -1.0, dt)


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_shen_energy_unconditional(eps):
    p = AllenCahnProblem(eps=eps, n=63)
    _, rec = run_allen_cahn(p, SchemeConfig(dt=1.0), 1000, scheme="shen", S=1.5)
    assert rec.is_non_increasing(1e-10)


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_rss_energy_decreasing_under_theorem(eps):
    p = AllenCahnProblem(eps=eps, n=63)
    A = p.A.toarray()
    B = np.diag(np.diag(A))
    _, beta = equivalence_bounds(A, B)
    rho = np.max(np.linalg.eigvalsh(A))
    bound = dtmax_allen_cahn(beta, beta, 0.0, rho, p.L_margin, eps)
    _, rec = run_allen_cahn(p, SchemeConfig(tau=beta, dt=0.99 * bound.dt_max), 1000)
    assert np.all(np.isfinite(rec.energy))
    assert rec.is_non_increasing(1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), amp=st.floats(0.01, 1.0))
def test_rss_energy_property(seed, amp):
    p = AllenCahnProblem(eps=0.1, n=31)
    A = p.A.toarray()
    _, beta = equivalence_bounds(A, np.diag(np.diag(A)))
    rho = np.max(np.linalg.eigvalsh(A))
    dt = 0.9 * dtmax_allen_cahn(beta, beta, 0.0, rho, p.L_margin, 0.1).dt_max
    _, rec = run_allen_cahn(p, SchemeConfig(tau=beta, dt=dt), 200, seed=seed, amplitude=amp)
    assert rec.is_non_increasing(1e-10)


def test_ac_bad_eps():
    with pytest.raises(ValueError):
        AllenCahnProblem(eps=0.0)
