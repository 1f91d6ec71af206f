"""Nontrivial critical points of ``Phi(u) = (1/p) E(u, u) - int G(u)``.

Two minimax schemes:

* ``mountain_pass``: paths from ``0`` to ``u1 = R u0`` with ``Phi(u1) <= 0``,
  relaxed by a climbing string (for ``lam < lambda_1``);
* ``solve_linking``: at ``p = 2`` the filled cone over the linking set
  ``A`` built from the first ``k`` eigenfunctions, relaxed as a climbing
  membrane with the boundary ``A`` pinned (for ``lambda_k < lam <
  lambda_{k+1}``).

Both report the weak residual ``max_i |E(u, e_i) - h g(u_i)|`` divided by
``1 + ||A_p u||_2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._string import climbing_string, hessian_bound
from .assembly import AssembledForm, seminorms
from .eigensolver import SpectrumP2, first_eigenpair, project_to_manifold, random_start
from .functionals import phi_gradient_array, phi_value_array
from .grid import GridFunction, check_same_grid, lp_norm
from .nonlinearity import ConditionReport, NonlinearitySpec, check_growth_conditions

__all__ = [
    "PathEnsemble", "LinkingGeometry", "SolverReport", "Radii", "ConditionsNotMet",
    "RadiiError", "GeometryError", "choose_radii", "mountain_pass",
    "build_linking_geometry_p2", "solve_linking", "weak_residual", "newton_polish",
    "phi_jacobian",
]

NONTRIVIAL_FLOOR = 1e-6


class ConditionsNotMet(ValueError):
    """The nonlinearity fails (g1)-(g3) or the eigenvalue gate."""

    def __init__(self, message: str, report: ConditionReport | None = None):
        super().__init__(message)
        self.report = report


class RadiiError(RuntimeError):
    """No admissible sphere radius or no admissible endpoint scale."""


class GeometryError(RuntimeError):
    """The sampled linking geometry violates a hypothesis."""


@dataclass
class PathEnsemble:
    endpoints: tuple[GridFunction, GridFunction]
    knots: list[GridFunction]

    @property
    def m(self) -> int:
        return len(self.knots)


@dataclass
class Radii:
    rho: float
    R: float
    u1: GridFunction
    sphere_min: float
    phi_u1: float


@dataclass
class LinkingGeometry:
    k: int
    lambda_tilde: float
    lambda_k: float
    lambda_k1: float
    A0: np.ndarray = field(repr=False)
    u0: GridFunction = field(repr=False)
    R: float = 0.0
    rho: float = 0.0
    dist_estimate: float = 0.0
    A_samples: np.ndarray = field(default=None, repr=False)
    B_samples: np.ndarray = field(default=None, repr=False)
    sup_phi_A: float = 0.0
    inf_phi_B: float = 0.0
    tol: float = 1e-9
    form: AssembledForm = field(default=None, repr=False)

    def B0_member(self, u: GridFunction) -> bool:
        """Membership in ``{rayleigh >= lambda_{k+1} - tol}``."""
        vals = u.values
        r = self.form.dual(vals) @ vals / (self.form.h * np.sum(np.abs(vals) ** self.form.p))
        return bool(r >= self.lambda_k1 - self.tol)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "lambda_tilde": self.lambda_tilde,
            "lambda_k": self.lambda_k, "lambda_k_plus_1": self.lambda_k1,
            "R": self.R, "rho": self.rho, "dist_estimate": self.dist_estimate,
            "A0_size": int(len(self.A0)), "A_samples": int(len(self.A_samples)),
            "B_samples": int(len(self.B_samples)),
            "sup_phi_A": self.sup_phi_A, "inf_phi_B": self.inf_phi_B,
        }


@dataclass
class SolverReport:
    critical_value: float
    solution: GridFunction
    residual: float
    phi_at_solution: float
    converged: bool
    iterations: int
    rho_used: float
    R_used: float
    trace: list = field(default_factory=list, repr=False)
    cerami_monitor: list = field(default_factory=list, repr=False)
    geometry: LinkingGeometry | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def nontrivial(self) -> bool:
        return lp_norm(self.solution, self.solution_p) > NONTRIVIAL_FLOOR

    @property
    def solution_p(self) -> float:
        return float(self.diagnostics.get("p", 2.0))

    def to_dict(self) -> dict:
        out = {
            "critical_value": self.critical_value,
            "residual": self.residual,
            "phi_at_solution": self.phi_at_solution,
            "converged": self.converged,
            "nontrivial": self.nontrivial,
            "iterations": self.iterations,
            "rho_used": self.rho_used,
            "R_used": self.R_used,
            "lp_norm": lp_norm(self.solution, self.solution_p),
            "cerami_monitor": [[float(a), float(b)] for a, b in self.cerami_monitor],
            "diagnostics": self.diagnostics,
        }
        if self.geometry is not None:
            out["geometry"] = self.geometry.to_dict()
        return out


def weak_residual(form: AssembledForm, g: NonlinearitySpec, u: GridFunction) -> float:
    """``max_i |E(u, e_i) - h g(u_i)| / (1 + ||A_p u||_2)``."""
    check_same_grid(form.grid, u.grid)
    return _weak_residual(form, g, u.values)


def _weak_residual(form, g, x, r=None) -> float:
    r = form.dual(x) if r is None else r
    return float(np.max(np.abs(r - form.h * g.g(x))) / (1.0 + np.linalg.norm(r)))


def _require_conditions(g: NonlinearitySpec) -> ConditionReport:
    rep = check_growth_conditions(g)
    if not rep.passed:
        failed = [name for name, ok in (("g1", rep.g1_pass), ("g2", rep.g2_pass),
                                        ("g3", rep.g3_feasible)) if not ok]
        raise ConditionsNotMet(f"nonlinearity fails {', '.join(failed)}", rep)
    return rep


def _phi_rows(form, g, U):
    return phi_value_array(form, np.atleast_2d(U), g)


def _directions(form: AssembledForm, count: int, seed: int, extra=()) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    D = [np.asarray(e, dtype=float) for e in extra]
    D += [random_start(form.grid.n, rng) for _ in range(count)]
    return np.array(D)


def choose_radii(form: AssembledForm, g: NonlinearitySpec, target_set: np.ndarray,
                 u0: GridFunction, rho0: float = 1.0, rho_min: float = 1e-8,
                 R_cap: float = 1e6) -> Radii:
    """Sphere radius ``rho`` and endpoint ``u1 = R u0`` for the minimax.

    ``rho`` halves from ``rho0`` until ``Phi >= 0`` at ``rho v / ||v||`` for
    every direction ``v`` in ``target_set`` (``||.||`` the seminorm); ``R``
    doubles from 1 until ``Phi(R u0) <= 0`` and ``||R u0|| > rho``.
    """
    check_same_grid(form.grid, u0.grid)
    D = np.atleast_2d(np.asarray(target_set, dtype=float))
    norms = seminorms(form, D)
    if np.any(norms <= 0):
        raise ValueError("sphere directions must be nonzero")
    S = D / norms[:, None]
    rho = rho0
    sphere_min = -np.inf
    while rho >= rho_min:
        sphere_min = float(np.min(_phi_rows(form, g, rho * S)))
        if sphere_min >= 0:
            break
        rho *= 0.5
    else:
        raise RadiiError(f"no sphere radius down to {rho_min:g} keeps Phi >= 0 "
                         f"(last infimum {sphere_min:.3e}); is lambda below the eigenvalue?")
    base = seminorms(form, u0.values[None])[0]
    R = 1.0
    while R <= R_cap:
        val = float(_phi_rows(form, g, R * u0.values)[0])
        if val <= 0 and R * base > rho:
            return Radii(rho, R, GridFunction(form.grid, R * u0.values), sphere_min, val)
        R *= 2.0
    raise RadiiError(f"Phi(R u0) stays positive up to R = {R_cap:g}")


def _string_callbacks(form: AssembledForm, g: NonlinearitySpec):
    h = form.h

    def evaluate(X):
        R = form.dual(X)
        vals = np.sum(R * X, axis=1) / form.p - h * np.sum(g.G(X), axis=1)
        return vals, (R - h * g.g(X)) / h

    def residual(x, grad):
        return _weak_residual(form, g, x)

    def lipschitz(X):
        return hessian_bound(form, X) + np.max(np.abs(g.dg(X)), axis=1)

    return evaluate, residual, lipschitz


def _cerami(form, g, trace_pts) -> list:
    out = []
    for x in trace_pts:
        r = form.dual(x)
        grad = r - form.h * g.g(x)
        norm = seminorms(form, x[None])[0]
        q = 1.0 - 1.0 / form.p
        out.append((float(_phi_rows(form, g, x)[0]),
                    float((1.0 + norm) * form.h ** q * np.linalg.norm(grad / form.h))))
    return out


def mountain_pass(form: AssembledForm, g: NonlinearitySpec, *, m: int = 33,
                  tol: float = 1e-8, max_iter: int = 20000, seed: int = 0,
                  direction: GridFunction | None = None, lambda1: float | None = None,
                  margin: float = 1e-6, rho0: float = 1.0, R_cap: float = 1e6,
                  sphere_samples: int = 32, record_every: int = 25) -> SolverReport:
    """Mountain-pass solution for ``lam < lambda_1``.

    The straight path ``0 -> u1`` with ``m`` knots is relaxed by a
    climbing string: the path maximum climbs along the path and descends
    across it, the other knots descend across it, and arc length is
    equalised on each side of the maximum.  ``direction`` (on ``M_p``)
    replaces the default endpoint direction ``phi_1``; passing ``-phi_1``
    for odd ``g`` yields the negated solution bitwise.
    """
    if m < 3:
        raise ValueError(f"need m >= 3 knots, got {m}")
    if g.p != form.p:
        raise ValueError(f"nonlinearity has p={g.p} but the form has p={form.p}")
    rep = _require_conditions(g)
    eig = None
    if lambda1 is None:
        eig = first_eigenpair(form, seed=seed)
        lambda1 = eig.value
    if not rep.g1_limit < lambda1 - margin:
        raise ConditionsNotMet(
            f"mountain pass needs lambda < lambda_1: lambda={rep.g1_limit:.6g}, "
            f"lambda_1={lambda1:.6g}", rep)
    if direction is None:
        eig = eig or first_eigenpair(form, seed=seed)
        direction = eig.function
    check_same_grid(form.grid, direction.grid)
    u0 = GridFunction(form.grid, project_to_manifold(direction.values, form.p, form.h))
    extra = [np.abs(u0.values)] if eig is None else [eig.function.values]
    dirs = _directions(form, sphere_samples, seed, extra)
    radii = choose_radii(form, g, dirs, u0, rho0=rho0, R_cap=R_cap)
    s = np.linspace(0.0, 1.0, m)
    knots = s[:, None] * radii.u1.values[None, :]
    evaluate, residual, lipschitz = _string_callbacks(form, g)
    res = climbing_string(knots, evaluate, residual, lipschitz, tol=tol, max_iter=max_iter,
                          record_every=record_every)
    x = res.knots[res.index]
    sol = GridFunction(form.grid, x)
    value = float(res.values[res.index])
    cerami = _cerami(form, g, [row for row in _trace_points(res)] + [x])
    diag = {"p": form.p, "lambda": rep.g1_limit, "lambda_1": lambda1,
            "sphere_min": radii.sphere_min, "phi_u1": radii.phi_u1,
            "knots": m, "collapsed": False}
    converged = bool(res.converged)
    if lp_norm(sol, form.p) <= NONTRIVIAL_FLOOR:
        diag["collapsed"] = True
        converged = False
    if value < -tol:
        converged = False
    return SolverReport(value, sol, _weak_residual(form, g, x), value, converged,
                        res.iterations, radii.rho, radii.R, res.trace, cerami, None, diag)


def _trace_points(res) -> list:
    # the string keeps no history of iterates; the monitor records the final
    # path maximum together with its immediate neighbours
    k = res.index
    return [res.knots[j] for j in (k - 1, k + 1) if 0 < j < len(res.knots) - 1]


def phi_jacobian(form: AssembledForm, g: NonlinearitySpec, x: np.ndarray) -> np.ndarray:
    """Hessian of ``Phi`` at ``x`` as a dense matrix (p >= 2)."""
    p, h = form.p, form.h
    if p < 2:
        raise ValueError("the Hessian of the p-form is singular for p < 2")
    W = form.near_weights + form._far_dense
    w = W * np.abs(x[:, None] - x[None, :]) ** (p - 2.0)
    J = -w
    diag = w.sum(axis=1) + (form.kappa * h + form.mass - form._far_rowsum) * np.abs(x) ** (p - 2.0)
    J[np.diag_indices_from(J)] = diag
    return (p - 1.0) * J - h * np.diag(g.dg(x))


def newton_polish(form: AssembledForm, g: NonlinearitySpec, x0: np.ndarray, *,
                  tol: float = 1e-8, max_steps: int = 30) -> tuple[np.ndarray, int, float]:
    """Newton iteration on ``Phi'(u) = 0`` with a residual backtracking guard.

    Returns ``(x, steps, weak residual)``.  Used only as a final refinement
    from a minimax iterate that is already close to a critical point.
    """
    x = np.array(x0, dtype=float)
    h = form.h
    res = _weak_residual(form, g, x)
    steps = 0
    while res > tol and steps < max_steps:
        F = form.dual(x) - h * g.g(x)
        try:
            dx = np.linalg.solve(phi_jacobian(form, g, x), -F)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-4:
            trial = x + t * dx
            r_t = _weak_residual(form, g, trial)
            if r_t < res:
                break
            t *= 0.5
        else:
            break
        x, res = trial, r_t
        steps += 1
    return x, steps, res


# ---------------------------------------------------------------- linking


def _sphere_mesh(k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric (``+-`` paired) points on the unit sphere of ``R^k``."""
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        ang = np.pi * np.arange(count) / count
        half = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        half = rng.standard_normal((count, k))
        half /= np.linalg.norm(half, axis=1, keepdims=True)
    return np.concatenate([half, -half])


def build_linking_geometry_p2(form: AssembledForm, spectrum: SpectrumP2, k: int,
                              lambda_tilde: float, g: NonlinearitySpec, *, seed: int = 0,
                              n_arc: int = 17, n_ray: int = 9, n_sphere: int = 8,
                              n_B: int = 64, gap_tol: float = 1e-6, rho0: float = 1.0,
                              R_cap: float = 1e6, tol: float = 1e-9) -> LinkingGeometry:
    """Sampled linking sets ``A`` and ``B`` for ``lambda_k < lambda_tilde < lambda_{k+1}``.

    ``A0`` holds ``+-`` unit combinations of the first ``k`` eigenfunctions
    on ``M_2``; ``u0`` is the ``(k+1)``-th eigenfunction.  ``A`` samples the
    segments ``R t a`` and the arcs ``R pi_M((1-t) a + t u0)``; ``B``
    samples ``rho v / ||v||`` with ``v`` drawn from the span of
    eigenfunctions ``k+1, k+2, ...`` (so ``rayleigh(v) >= lambda_{k+1}``).
    """
    if form.p != 2:
        raise ValueError("the linking geometry is built from exact eigenspaces and needs p = 2; "
                         "use mountain_pass for other p")
    n = form.grid.n
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}")
    lam = spectrum.values
    lk, lk1 = float(lam[k - 1]), float(lam[k])
    if not (lk + gap_tol < lambda_tilde < lk1 - gap_tol):
        raise GeometryError(f"lambda_tilde={lambda_tilde} must lie strictly inside "
                            f"(lambda_k, lambda_k+1) = ({lk}, {lk1}) with gap {gap_tol:g}")
    t = np.geomspace(1e-6, 1e6, 241)
    deficit = g.G(t) - lambda_tilde * t ** 2 / 2.0
    deficit = np.minimum(deficit, g.G(-t) - lambda_tilde * t ** 2 / 2.0)
    if np.any(deficit < -1e-12 * lambda_tilde * t ** 2):
        bad = float(t[np.argmin(deficit)])
        raise GeometryError(f"G(t) >= lambda_tilde t^2 / 2 fails at |t| = {bad:g}")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    h = form.h
    phis = np.array([f.values for f in spectrum.functions])
    coeff = _sphere_mesh(k, n_sphere, rng)
    A0 = project_to_manifold(coeff @ phis[:k], 2.0, h)
    u0 = project_to_manifold(phis[k], 2.0, h)
    ray = np.linspace(0.0, 1.0, n_ray)
    arc = np.linspace(0.0, 1.0, n_arc)
    arcs = project_to_manifold((1.0 - arc)[None, :, None] * A0[:, None, :]
                               + arc[None, :, None] * u0[None, None, :], 2.0, h)
    arcs = arcs.reshape(-1, n)
    R = 1.0
    while True:
        if R > R_cap:
            raise GeometryError(f"Phi stays positive on the arcs up to R = {R_cap:g}")
        if np.max(_phi_rows(form, g, R * arcs)) <= 0:
            break
        R *= 2.0
    segments = (R * ray[None, :, None] * A0[:, None, :]).reshape(-1, n)
    A_samples = np.concatenate([segments, R * arcs])
    top = min(n, k + 8)
    mix = rng.standard_normal((n_B - 1, top - k))
    B0 = np.concatenate([u0[None], project_to_manifold(mix @ phis[k:top], 2.0, h)])
    dist = 0.9 * float(np.min(seminorms(form, np.concatenate([A0, u0[None]]))))
    S = B0 / seminorms(form, B0)[:, None]
    rho = min(rho0, 0.99 * R * dist)
    while True:
        if rho < 1e-8:
            raise GeometryError("no radius keeps Phi >= 0 on B; is lambda below lambda_k+1?")
        inf_B = float(np.min(_phi_rows(form, g, rho * S)))
        if inf_B >= 0:
            break
        rho *= 0.5
    B_samples = rho * S
    phiA = _phi_rows(form, g, A_samples)
    sup_A = float(np.max(phiA))
    if sup_A > inf_B:
        worst = int(np.argmax(phiA))
        raise GeometryError(f"sup Phi(A) = {sup_A:.3e} exceeds inf Phi(B) = {inf_B:.3e} "
                            f"at A sample {worst}")
    return LinkingGeometry(k, float(lambda_tilde), lk, lk1, A0,
                           GridFunction(form.grid, u0), R, rho, dist, A_samples,
                           B_samples, sup_A, inf_B, tol, form)


def _orthonormal_pair(a: np.ndarray, b: np.ndarray):
    """Row-wise Gram-Schmidt of two tangent fields."""
    a = a / np.maximum(np.linalg.norm(a, axis=-1, keepdims=True), 1e-300)
    b = b - np.sum(a * b, axis=-1, keepdims=True) * a
    b = b / np.maximum(np.linalg.norm(b, axis=-1, keepdims=True), 1e-300)
    return a, b


def _membrane_boundary(geometry: LinkingGeometry, n_sigma: int) -> np.ndarray:
    """The loop ``R phi -> R u0 -> -R phi`` through the arcs, ``n_sigma`` points."""
    h = geometry.form.h
    a, u0 = geometry.A0[0], geometry.u0.values
    sig = np.linspace(0.0, 1.0, n_sigma)
    pts = np.empty((n_sigma, len(u0)))
    for i, s in enumerate(sig):
        if s <= 0.5:
            w = 2.0 * s
            pts[i] = (1.0 - w) * a + w * u0
        else:
            w = 2.0 * s - 1.0
            pts[i] = w * (-a) + (1.0 - w) * u0
    return geometry.R * project_to_manifold(pts, 2.0, h)


def solve_linking(form: AssembledForm, g: NonlinearitySpec, geometry: LinkingGeometry, *,
                  n_sigma: int = 25, n_t: int = 13, tol: float = 1e-8,
                  max_iter: int = 20000, polish_from: float | None = 1e-4,
                  record_every: int = 25) -> SolverReport:
    """Minimax over the filled cone ``{t u : u in A}`` (``k = 1``, ``p = 2``).

    The cone is a half disc spanned by ``phi_1`` and ``u0``; its knots
    ``Y[i, j] = t_j a(sigma_i)`` start on the plane, the boundary (rays to
    ``+-R phi_1``, the arc through ``R u0`` and the apex) stays pinned.
    Each sweep the highest knot moves with the gradient reflected in the
    local tangent plane (ascent inside the membrane, descent across it)
    and the others descend across the membrane.

    The climbing knot converges only linearly; once its residual is below
    ``polish_from`` it is handed to :func:`newton_polish` (``None`` keeps
    the membrane running to ``tol``).
    """
    if form.p != 2:
        raise ValueError("solve_linking needs p = 2; use mountain_pass for other p")
    if geometry.k != 1:
        raise ValueError("solve_linking relaxes a two-dimensional cone and supports k = 1 only")
    if g.p != form.p:
        raise ValueError(f"nonlinearity has p={g.p} but the form has p={form.p}")
    rep = _require_conditions(g)
    if n_sigma < 3 or n_t < 3:
        raise ValueError("need at least three knots in each membrane direction")
    h, n = form.h, form.grid.n
    boundary = _membrane_boundary(geometry, n_sigma)
    tt = np.linspace(0.0, 1.0, n_t)
    Y = tt[None, :, None] * boundary[:, None, :]          # (sigma, t, n)
    pinned = Y.copy()
    evaluate, residual, lipschitz = _string_callbacks(form, g)
    free = (slice(1, -1), slice(1, -1))
    trace = []
    vals = grads = None
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        X = Y[free].reshape(-1, n)
        vals, grads = evaluate(X)
        kk = int(np.argmax(vals))
        res = residual(X[kk], grads[kk])
        if best is None or res < best[0]:
            best = (res, X[kk].copy(), float(vals[kk]))
        if it % record_every == 1:
            trace.append((it, kk, float(vals[kk]), float(res)))
        if res <= tol or (polish_from is not None and res <= polish_from):
            trace.append((it, kk, float(vals[kk]), float(res)))
            break
        ts = (Y[2:, 1:-1] - Y[:-2, 1:-1]).reshape(-1, n)
        tr = (Y[1:-1, 2:] - Y[1:-1, :-2]).reshape(-1, n)
        e1, e2 = _orthonormal_pair(ts, tr)
        along = np.sum(grads * e1, axis=1, keepdims=True) * e1 \
            + np.sum(grads * e2, axis=1, keepdims=True) * e2
        move = grads - along
        move[kk] = grads[kk] - 2.0 * along[kk]
        steps = 1.0 / lipschitz(X)
        Y[free] = (X - steps[:, None] * move).reshape(n_sigma - 2, n_t - 2, n)
    # boundary knots are never written; assert rather than trust
    edge = np.ones(Y.shape[:2], dtype=bool)
    edge[free] = False
    if not np.array_equal(Y[edge], pinned[edge]):
        raise AssertionError("pinned membrane boundary moved")
    res, x, value = best
    diag = {"p": form.p, "lambda": rep.g1_limit, "membrane": [n_sigma, n_t],
            "inf_phi_B": geometry.inf_phi_B, "sup_phi_A": geometry.sup_phi_A,
            "membrane_value": value, "membrane_residual": res, "newton_steps": 0,
            "boundary_pinned": True}
    if res > tol and polish_from is not None and res <= polish_from:
        x, steps, res = newton_polish(form, g, x, tol=tol)
        value = float(_phi_rows(form, g, x)[0])
        diag["newton_steps"] = steps
    converged = res <= tol
    sol = GridFunction(form.grid, x)
    ev = np.linalg.eigvalsh(phi_jacobian(form, g, x))
    diag["morse_index"] = int(np.sum(ev < 0))
    if lp_norm(sol, form.p) <= NONTRIVIAL_FLOOR:
        converged = False
        diag["collapsed"] = True
    if value < geometry.inf_phi_B - tol:
        converged = False
    cerami = _cerami(form, g, [x])
    return SolverReport(value, sol, _weak_residual(form, g, x), value, bool(converged), it,
                        geometry.rho, geometry.R, trace, cerami, geometry, diag)
