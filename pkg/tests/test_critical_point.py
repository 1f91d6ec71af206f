import functools

import numpy as np
import pytest

from conftest import form_for, random_function
from logplap.assembly import energy
from logplap.critical_point import (ConditionsNotMet, GeometryError, RadiiError,
                                    build_linking_geometry_p2, choose_radii, mountain_pass,
                                    newton_polish, phi_jacobian, solve_linking, weak_residual)
from logplap.eigensolver import first_eigenpair, spectrum_p2
from logplap.functionals import I_p, phi, rayleigh
from logplap.grid import GridFunction, lp_norm
from logplap.nonlinearity import make_builtin


def brute_residual(form, g, u):
    """max_i |E(u, e_i) - h g(u_i)| / (1 + ||A_p u||_2), one basis vector at a time."""
    grid = form.grid
    r = np.array([energy(form, u, grid.basis(i)) for i in range(grid.n)])
    gu = np.array([float(g.g(x)) for x in u.values])
    return np.max(np.abs(r - form.h * gu)) / (1 + np.linalg.norm(r))


@functools.lru_cache(maxsize=None)
def mp_run(p, sign=1):
    f = form_for(0, 1, 64, p)
    g = make_builtin("h2", lam=0.0, theta=0.5, p=p)
    eig = first_eigenpair(f)
    direction = eig.function if sign > 0 else -eig.function
    return f, g, mountain_pass(f, g, direction=direction, lambda1=eig.value)


@functools.lru_cache(maxsize=None)
def linking_run(lam=3.0):
    f = form_for(0, 1, 64)
    g = make_builtin("h2", lam=lam, theta=0.5, p=2.0)
    sp = spectrum_p2(f)
    geo = build_linking_geometry_p2(f, sp, 1, lam, g)
    return f, g, sp, geo, solve_linking(f, g, geo)


def test_weak_residual_matches_brute_force(rng):
    f = form_for(-1, 1, 20, 3.0)
    g = make_builtin("h1", lam=0.4, p=3.0)
    u = random_function(f.grid, rng)
    assert weak_residual(f, g, u) == pytest.approx(brute_residual(f, g, u), rel=1e-12)


def test_jacobian_matches_finite_differences(rng):
    for p in (2.0, 3.0):
        f = form_for(-1, 1, 16, p)
        g = make_builtin("h2", lam=0.5, p=p)
        x = random_function(f.grid, rng, floor=0.1).values
        J = phi_jacobian(f, g, x)
        s = 1e-6
        for i in (0, 7, 15):
            e = np.zeros(16)
            e[i] = s
            col = (phi(f, GridFunction(f.grid, x + e), g).gradient
                   - phi(f, GridFunction(f.grid, x - e), g).gradient) / (2 * s)
            np.testing.assert_allclose(J[:, i], col, rtol=1e-5, atol=1e-7)
    with pytest.raises(ValueError):
        phi_jacobian(form_for(0, 1, 8, 1.5), make_builtin("h2", p=1.5), np.ones(8))


# ---------------------------------------------------------------- radii


def test_choose_radii_below_lambda1():
    f = form_for(0, 1, 64)
    g = make_builtin("h2", lam=0.0, p=2.0)
    eig = first_eigenpair(f)
    radii = choose_radii(f, g, eig.function.values[None], eig.function)
    assert radii.rho > 0
    assert radii.phi_u1 <= 0 and radii.sphere_min >= 0
    assert phi(f, radii.u1, g).value <= 0


def test_choose_radii_fails_above_lambda1():
    f = form_for(0, 1, 64)
    eig = first_eigenpair(f)
    g = make_builtin("h2", lam=eig.value + 0.5, p=2.0)
    # along phi_1 the quadratic part is already negative
    assert phi(f, 1e-4 * eig.function, g).value < 0
    with pytest.raises(RadiiError):
        choose_radii(f, g, eig.function.values[None], eig.function)


def test_choose_radii_monotone_in_C():
    # a fixed lam close to lambda_1 at C = 1; raising C widens the gap
    g = make_builtin("h2", lam=1.7, p=2.0)
    rhos = []
    for C in (1.0, 1.25, 1.5, 2.0):
        f = form_for(0, 1, 32, 2.0, C)
        eig = first_eigenpair(f)
        dirs = np.stack([eig.function.values, np.sin(np.pi * f.grid.nodes * 3)])
        rhos.append(choose_radii(f, g, dirs, eig.function, rho0=64.0).rho)
    assert all(a <= b for a, b in zip(rhos, rhos[1:]))
    assert rhos[0] < rhos[-1]


# ---------------------------------------------------------- mountain pass


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_mountain_pass_solution(p):
    f, g, rep = mp_run(p)
    assert rep.converged and rep.nontrivial
    assert rep.residual < 1e-6
    assert brute_residual(f, g, rep.solution) < 1e-6
    assert lp_norm(rep.solution, p) > 1e-3
    assert lp_norm(rep.solution, p) > rep.rho_used / 2
    assert rep.phi_at_solution >= 0 and rep.critical_value == rep.phi_at_solution
    # the critical value is above the sphere level and below the path start
    assert rep.critical_value > 0
    u = rep.solution.values
    assert np.all(u > 0)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_mountain_pass_negated_seed(p):
    _, _, pos = mp_run(p, 1)
    f, g, neg = mp_run(p, -1)
    np.testing.assert_array_equal(neg.solution.values, -pos.solution.values)
    assert neg.critical_value == pos.critical_value
    assert neg.residual == pos.residual


def test_mountain_pass_cerami_monitor():
    _, _, rep = mp_run(2.0)
    vals = [v for v, _ in rep.cerami_monitor]
    assert all(np.isfinite(vals))
    # (1 + ||u||) ||Phi'(u)|| collapses by orders of magnitude along the run
    assert rep.cerami_monitor[-1][1] < 1e-4 * rep.cerami_monitor[0][1]
    assert rep.cerami_monitor[-1][0] == rep.critical_value


def test_mountain_pass_refuses_power():
    f = form_for(0, 1, 32)
    with pytest.raises(ConditionsNotMet):
        mountain_pass(f, make_builtin("power", lam=1.0, p=2.0))


def test_mountain_pass_refuses_lambda_above_lambda1():
    f = form_for(0, 1, 32)
    with pytest.raises(ConditionsNotMet, match="lambda_1"):
        mountain_pass(f, make_builtin("h2", lam=3.0, p=2.0))


def test_mountain_pass_iteration_cap():
    f = form_for(0, 1, 32)
    rep = mountain_pass(f, make_builtin("h2", lam=0.0, p=2.0), max_iter=5)
    assert not rep.converged
    assert rep.iterations == 5
    assert rep.cerami_monitor


def test_mountain_pass_deterministic():
    f = form_for(0, 1, 32, 3.0)
    g = make_builtin("h3", lam=0.5, p=3.0)
    a = mountain_pass(f, g, seed=4, max_iter=3000)
    b = mountain_pass(f, g, seed=4, max_iter=3000)
    np.testing.assert_array_equal(a.solution.values, b.solution.values)
    assert a.trace == b.trace


# ---------------------------------------------------------------- linking


def test_linking_geometry():
    f, g, sp, geo, _ = linking_run()
    assert geo.k == 1
    phi1 = sp.functions[0].values
    for a in geo.A0:
        assert abs(abs(a @ phi1) * f.h - np.sqrt(2)) < 1e-10
    assert len(geo.A0) == 2
    np.testing.assert_array_equal(geo.A0[0], -geo.A0[1])
    assert abs(rayleigh(f, geo.u0) - sp.values[1]) < 1e-10
    phiA = np.array([phi(f, GridFunction(f.grid, x), g).value for x in geo.A_samples])
    phiB = np.array([phi(f, GridFunction(f.grid, x), g).value for x in geo.B_samples])
    assert phiA.max() <= 0 <= phiB.min()
    assert phiA.max() <= phiB.min()
    assert geo.rho < geo.R * geo.dist_estimate
    for x in geo.B_samples:
        assert geo.B0_member(GridFunction(f.grid, x))
    for a in geo.A0:
        assert not geo.B0_member(GridFunction(f.grid, a))


def test_linking_cone_bound():
    f, g, sp, geo, _ = linking_run()
    for a in geo.A0:
        u = GridFunction(f.grid, a)
        for t in (0.1, 1.0, 5.0, 40.0):
            val = phi(f, t * u, g).value
            bound = t ** 2 * (I_p(f, u) - geo.lambda_tilde)
            assert val <= bound + 1e-9 * abs(bound)
            assert bound <= 0


def test_linking_geometry_rejections():
    f = form_for(0, 1, 64)
    sp = spectrum_p2(f)
    g = make_builtin("h2", lam=3.0, p=2.0)
    with pytest.raises(GeometryError):
        build_linking_geometry_p2(f, sp, 1, sp.values[0], g)
    with pytest.raises(GeometryError):
        build_linking_geometry_p2(f, sp, 1, 4.5, g)
    # the lower bound on G fails once lambda_tilde exceeds the nonlinearity's lambda
    with pytest.raises(GeometryError, match="lambda_tilde"):
        build_linking_geometry_p2(f, sp, 1, 3.5, g)
    with pytest.raises(ValueError):
        build_linking_geometry_p2(form_for(0, 1, 16, 3.0), sp, 1, 3.0,
                                  make_builtin("h2", lam=3.0, p=3.0))


def test_linking_solution():
    f, g, sp, geo, rep = linking_run()
    assert rep.converged and rep.nontrivial
    assert rep.residual < 1e-6
    assert brute_residual(f, g, rep.solution) < 1e-6
    assert rep.critical_value >= geo.inf_phi_B - 1e-6
    assert rep.diagnostics["boundary_pinned"]
    assert rep.geometry is geo
    # the solution sits in the phi_2 direction and is sign-changing
    u = rep.solution.values
    assert u.min() < 0 < u.max()
    assert abs(f.h * u @ sp.functions[0].values) < 1e-6


def test_linking_refuses_unsupported():
    f, g, sp, geo, _ = linking_run()
    with pytest.raises(ValueError):
        solve_linking(form_for(0, 1, 64, 3.0), make_builtin("h2", lam=3.0, p=3.0), geo)
    with pytest.raises(ConditionsNotMet):
        solve_linking(f, make_builtin("power", lam=3.0, p=2.0), geo)


def test_newton_polish_reduces_residual():
    f, g, _, geo, rep = linking_run()
    x = rep.solution.values * (1 + 1e-3)
    start = weak_residual(f, g, GridFunction(f.grid, x))
    y, steps, res = newton_polish(f, g, x, tol=1e-10)
    assert res < 1e-10 < start and steps >= 1
