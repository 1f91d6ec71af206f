"""Acceptance criteria 1-12, one test each.

Every test prints a single ``PASS criterion N: ...`` or
``FAIL criterion N: ...`` line to the terminal, then asserts.
"""

import contextlib
import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from conftest import form_for, random_function
from logplap.assembly import (Constants, apply_Ap, apply_Ap_split, boundary_weight,
                              cell_pair_integral, energy, seminorm)
from logplap.cli import main
from logplap.critical_point import (build_linking_geometry_p2, mountain_pass, solve_linking,
                                    weak_residual)
from logplap.eigensolver import first_eigenpair, spectrum_p2
from logplap.functionals import I_p, phi, phi_lambda, rayleigh
from logplap.grid import GridFunction, build_grid, lp_norm
from logplap.nonlinearity import check_growth_conditions, make_builtin
from logplap.verify import (check_origin_asymptotics, log_sobolev_required, origin_defect,
                            run_suite, sample_ensemble)

from test_cli import same_tree


@pytest.fixture
def criterion(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(line):
        if reporter is not None:
            reporter.ensure_newline()
            reporter.write_line(line)
        else:
            print(line)

    @contextlib.contextmanager
    def run(n, title):
        details = []
        try:
            yield details
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            emit(f"FAIL criterion {n}: {title} ({msg})")
            raise
        extra = f" [{'; '.join(details)}]" if details else ""
        emit(f"PASS criterion {n}: {title}{extra}")

    return run


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_criterion_01_oracle_equivalence(criterion):
    with criterion(1, "first eigenpair matches the dense p=2 spectrum") as info:
        t = time.perf_counter()
        f = form_for(0, 1, 64)
        eig = first_eigenpair(f)
        oracle = spectrum_p2(f).values[0]
        dt = time.perf_counter() - t
        info += [f"lambda_1 {eig.value:.12f}", f"diff {abs(eig.value - oracle):.1e}",
                 f"{dt:.2f} s"]
        assert eig.converged
        assert abs(eig.value - oracle) < 1e-8
        assert dt < 10


def test_criterion_02_quadrature_exactness(criterion):
    with criterion(2, "cell-pair integral and boundary weight in closed form") as info:
        worst = 0.0
        for h in (1e-3, 1e-2, 1e-1):
            val = cell_pair_integral(h, 1)
            # adjacent cells share an edge; split y at the diagonal-free range
            ref = dblquad(lambda y, x: 1.0 / (y - x), 0, h, lambda x: h, lambda x: 2 * h,
                          epsabs=1e-15, epsrel=1e-13)[0]
            worst = max(worst, abs(val - ref), abs(val - 2 * h * math.log(2)))
        kappa = boundary_weight(build_grid(0, 1, 1), Constants())[0]
        oracle = quad(lambda y: 1 / (0.5 - y), -0.5, 0)[0] + quad(lambda y: 1 / (y - 0.5), 1, 1.5)[0]
        info += [f"worst pair error {worst:.1e}", f"kappa(0.5) {kappa:.15f}"]
        assert worst < 1e-12
        assert abs(kappa - 2 * math.log(2)) < 1e-10
        assert abs(kappa - oracle) < 1e-10


def test_criterion_03_homogeneity(criterion):
    with criterion(3, "degree-p homogeneity and scale invariance") as info:
        rng = np.random.default_rng(3)
        worst = 0.0
        for p in (1.5, 2.0, 3.0):
            f = form_for(-1, 1, 32, p)
            for _ in range(100):
                u = random_function(f.grid, rng)
                t = float(np.exp(rng.uniform(-3, 3)))
                tu = t * u
                worst = max(worst,
                            rel(energy(f, tu, tu), t ** p * energy(f, u, u)),
                            rel(phi_lambda(f, tu, 1.3).value, t ** p * phi_lambda(f, u, 1.3).value),
                            rel(rayleigh(f, tu), rayleigh(f, u)),
                            rel(log_sobolev_required(f, tu.values)[0],
                                log_sobolev_required(f, u.values)[0]))
        info.append(f"worst relative error {worst:.1e}")
        assert worst < 1e-10


def _fd_rel_errors(f, grad_fn, val_fn, rng, floor, count=50, s=1e-5):
    errs = []
    for _ in range(count):
        u = random_function(f.grid, rng, floor=floor)
        v = rng.standard_normal(f.grid.n)
        fd = (val_fn(GridFunction(f.grid, u.values + s * v))
              - val_fn(GridFunction(f.grid, u.values - s * v))) / (2 * s)
        an = grad_fn(u) @ v
        errs.append(rel(an, fd))
    return max(errs)


def test_criterion_04_gradients(criterion):
    with criterion(4, "A_p and Phi' against central differences") as info:
        rng = np.random.default_rng(4)
        for p, tol in ((2.0, 1e-6), (1.5, 1e-4), (3.0, 1e-4)):
            f = form_for(-1, 1, 24, p, 1.0, 0.3)
            g = make_builtin("h2", lam=0.5, p=p)
            floor = 0.0 if p == 2 else 0.1
            e1 = _fd_rel_errors(f, lambda u: apply_Ap(f, u), lambda u: I_p(f, u), rng, floor)
            e2 = _fd_rel_errors(f, lambda u: phi(f, u, g).gradient,
                                lambda u: phi(f, u, g).value, rng, floor)
            info.append(f"p={p:g}: {e1:.1e}/{e2:.1e}")
            assert e1 < tol and e2 < tol


def test_criterion_05_operator_split(criterion):
    with criterion(5, "A_p = A' + A'' and <A'u,u> = [u]^p / 2") as info:
        rng = np.random.default_rng(5)
        worst = 0.0
        for p in (1.5, 2.0, 3.0):
            f = form_for(-1, 1.5, 30, p, 1.0, 0.7)
            for _ in range(100):
                u = random_function(f.grid, rng)
                near, far = apply_Ap_split(f, u)
                np.testing.assert_array_equal(apply_Ap(f, u), near + far)
                worst = max(worst, rel(near @ u.values, 0.5 * seminorm(f, u) ** p))
        info.append(f"worst identity error {worst:.1e}")
        assert worst < 1e-12


def test_criterion_06_affine_spectrum(criterion):
    with criterion(6, "lambda(C, rho) = C lambda(1, 0) + rho") as info:
        base = spectrum_p2(form_for(0, 1, 64)).values
        worst = 0.0
        for C, rho in ((1.0, 0.0), (2.0, 5.0), (0.5, -3.0)):
            vals = spectrum_p2(form_for(0, 1, 64, 2.0, C, rho)).values
            worst = max(worst, float(np.max(np.abs(vals - (C * base + rho)))))
        info.append(f"worst deviation {worst:.1e}")
        assert worst < 1e-8


def test_criterion_07_inequality_harness(criterion):
    with criterion(7, "inequality suite, 1000 samples, n 64 -> 129") as info:
        t = time.perf_counter()
        failed, drift = [], 0.0
        for a, b in ((0, 1), (-1, 1)):
            for p in (1.5, 2.0, 3.0):
                for r in run_suite(form_for(a, b, 64, p), count=1000, seed=0):
                    drift = max(drift, r.refinement_drift)
                    if not (r.passed and math.isfinite(r.empirical_constant)
                            and r.refinement_drift < 0.25):
                        failed.append(f"{r.name} p={p:g} on ({a},{b})")
        dt = time.perf_counter() - t
        info += [f"max drift {drift:.3f}", f"{dt:.1f} s"]
        assert not failed, failed
        assert dt < 120


def test_criterion_08_growth_conditions(criterion):
    with criterion(8, "h1, h2, h3 pass; lam psi_p fails g3; theta = 1 fails g2") as info:
        for kind in ("h1", "h2", "h3"):
            for p in (1.5, 2.0, 3.0):
                rep = check_growth_conditions(make_builtin(kind, lam=0.5, theta=0.5, p=p))
                assert rep.passed, (kind, p, rep.to_dict())
        for p in (1.5, 2.0, 3.0):
            rep = check_growth_conditions(make_builtin("power", lam=0.5, p=p))
            assert not rep.g3_feasible and not rep.passed
        rep = check_growth_conditions(make_builtin("h2", lam=0.0, theta=1.0, p=2.0, strict=False))
        info.append(f"theta=1 g2 limit {rep.g2_limit:.3f}")
        assert not rep.g2_pass


def test_criterion_09_mountain_pass(criterion):
    with criterion(9, "mountain-pass solutions for h2, lam = 0, p = 2, 3") as info:
        for p in (2.0, 3.0):
            f = form_for(0, 1, 64, p)
            g = make_builtin("h2", lam=0.0, theta=0.5, p=p)
            t = time.perf_counter()
            eig = first_eigenpair(f)
            rep = mountain_pass(f, g, direction=eig.function, lambda1=eig.value)
            dt = time.perf_counter() - t
            neg = mountain_pass(f, g, direction=-eig.function, lambda1=eig.value)
            res = weak_residual(f, g, rep.solution)
            info.append(f"p={p:g}: c={rep.critical_value:.6g} res={res:.1e} {dt:.1f} s")
            assert rep.converged and res < 1e-6
            assert lp_norm(rep.solution, p) > 1e-3
            assert phi(f, rep.solution, g).value >= 0
            assert dt < 60
            np.testing.assert_array_equal(neg.solution.values, -rep.solution.values)


def test_criterion_10_linking(criterion):
    with criterion(10, "linking solution for p = 2 between lambda_1 and lambda_2") as info:
        t = time.perf_counter()
        f = form_for(0, 1, 64)
        sp = spectrum_p2(f)
        lam = 3.0
        assert sp.values[0] < lam < sp.values[1]
        g = make_builtin("h2", lam=lam, theta=0.5, p=2.0)
        # lower bound G(t) >= lam_tilde t^2 / 2 on a sampled range
        ts = np.geomspace(1e-8, 1e8, 400)
        assert np.all(g.G(ts) >= lam * ts ** 2 / 2 * (1 - 1e-12))
        geo = build_linking_geometry_p2(f, sp, 1, lam, g)
        phiA = [phi(f, GridFunction(f.grid, x), g).value for x in geo.A_samples]
        phiB = [phi(f, GridFunction(f.grid, x), g).value for x in geo.B_samples]
        assert max(phiA) <= min(phiB)
        rep = solve_linking(f, g, geo)
        dt = time.perf_counter() - t
        res = weak_residual(f, g, rep.solution)
        info += [f"sup A {max(phiA):.3g}", f"inf B {min(phiB):.4g}",
                 f"c={rep.critical_value:.6g}", f"res={res:.1e}", f"{dt:.1f} s"]
        assert rep.converged and rep.nontrivial and res < 1e-6
        assert rep.critical_value >= min(phiB) - 1e-6
        assert dt < 120


COMMANDS = [
    ("eig", {}, ["--second"]),
    ("spectrum", {}, []),
    ("solve", {}, []),
    ("solve", {"nonlinearity": {"lambda": 3.0}}, ["--mode", "linking"]),
    ("verify", {}, []),
    ("check-g", {"nonlinearity": {"kind": "h3"}}, []),
]


def test_criterion_11_cli_determinism(criterion, tmp_path):
    with criterion(11, "every CLI command is byte-identical across runs") as info:
        for i, (cmd, cfg, extra) in enumerate(COMMANDS):
            path = tmp_path / f"cfg{i}.json"
            path.write_text(json.dumps(cfg))
            outs = []
            for rep in ("a", "b"):
                out = tmp_path / f"{i}{rep}"
                code = main([cmd, "--config", str(path), "--out", str(out), "--seed", "7",
                             "--quiet"] + extra)
                assert code == 0, (cmd, code)
                outs.append(out)
            assert same_tree(*outs), cmd
        info.append(f"{len(COMMANDS)} runs compared")


def test_criterion_12_origin_asymptotics(criterion):
    with criterion(12, "origin defect decays 20x for h1 and h2") as info:
        worst = 0.0
        for p in (1.5, 2.0, 3.0):
            f = form_for(0, 1, 64, p)
            ens = sample_ensemble(f.grid, 1000, seed=0)
            for kind in ("h1", "h2"):
                g = make_builtin(kind, lam=0.5, theta=0.5, p=p)
                e = origin_defect(f, g, ens.functions, [1e-1, 1e-5])
                assert np.all(e[:, 0] > 0)
                worst = max(worst, float(np.max(e[:, 1] / e[:, 0])))
                rep = check_origin_asymptotics(f, g, [10.0 ** -k for k in range(1, 6)], ens)
                assert rep.passed
        info.append(f"worst ratio e(1e-5)/e(1e-1) {worst:.3g}")
        assert worst <= 1 / 20
