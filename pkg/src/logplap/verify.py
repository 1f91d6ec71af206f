"""Empirical checks of the functional inequalities on random ensembles.

Each check reports per-sample ``(lhs, rhs, slack)`` triples, the smallest
constant that makes every sample pass (the empirical constant) and, when a
refined grid is supplied, the relative drift of that constant.  A report
passes when every slack clears ``-abs_tol``, the constant is finite and the
drift stays below the threshold.  No continuum constant is asserted.

Integrals use the midpoint rule with the convention ``0 ln 0 = 0``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .assembly import AssembledForm, assemble_form, seminorms
from .grid import Grid, GridFunction, refine
from .nonlinearity import NonlinearitySpec

__all__ = [
    "Ensemble", "InequalityReport", "RECIPES", "sample_ensemble", "check_log_sobolev",
    "check_lemma_bounds", "check_corollaries", "check_origin_asymptotics", "run_suite",
    "write_reports",
]

RECIPES = ("smoothed-gaussian", "bumps", "mixed")
DRIFT_THRESHOLD = 0.25
ZERO_FLOOR = 1e-12
COR2_RHOS = tuple(10.0 ** -k for k in range(1, 7))


@dataclass
class Ensemble:
    grid: Grid
    functions: np.ndarray = field(repr=False)     # (count, n)
    seed: int
    recipe: str

    def __len__(self) -> int:
        return len(self.functions)

    def __getitem__(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.functions[i])


@dataclass
class InequalityReport:
    name: str
    per_sample: np.ndarray = field(repr=False)    # (count, 3): lhs, rhs, slack
    empirical_constant: float
    refinement_drift: float | None
    passed: bool
    parameters: dict = field(default_factory=dict)
    abs_tol: float = 1e-9

    def worst(self, count: int = 5) -> list:
        order = np.argsort(self.per_sample[:, 2], kind="stable")[:count]
        return [{"sample": int(i), "lhs": float(self.per_sample[i, 0]),
                 "rhs": float(self.per_sample[i, 1]), "slack": float(self.per_sample[i, 2])}
                for i in order]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parameters": self.parameters,
            "empirical_constant": self.empirical_constant,
            "refinement_drift": self.refinement_drift,
            "passed": self.passed,
            "abs_tol": self.abs_tol,
            "samples": int(len(self.per_sample)),
            "worst": self.worst(),
        }


# ---------------------------------------------------------------- ensembles


def _unit_x(grid: Grid) -> np.ndarray:
    return (grid.nodes - grid.a) / grid.length


def _random_series(x, rng):
    # a smooth Gaussian field: sine series with coefficients decaying like k^-1.5
    k = np.arange(1, 17)
    z = rng.standard_normal(len(k)) * k ** -1.5
    return np.sin(np.pi * np.outer(x, k)) @ z


def _bump(x, c, w, amp):
    return amp * np.exp(-0.5 * ((x - c) / w) ** 2)


def _random_bumps(x, rng):
    out = np.zeros_like(x)
    for _ in range(int(rng.integers(1, 4))):
        out += _bump(x, rng.uniform(0.05, 0.95), rng.uniform(0.03, 0.2),
                     rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 3.0))
    return out


def _edge_bump(x, rng):
    c = rng.uniform(0.0, 0.05) if rng.random() < 0.5 else rng.uniform(0.95, 1.0)
    return _bump(x, c, rng.uniform(0.02, 0.06), rng.uniform(0.5, 3.0))


def _sign_changing(x, rng):
    c = rng.uniform(0.2, 0.8)
    w = rng.uniform(0.05, 0.15)
    a = rng.uniform(0.5, 3.0)
    return _bump(x, c - w, w, a) - _bump(x, c + w, w, a * rng.uniform(0.5, 1.5))


def sample_ensemble(grid: Grid, count: int, seed: int = 0,
                    recipe: str = "mixed") -> Ensemble:
    """Seeded random grid functions.

    Sample ``i`` draws from its own stream ``SeedSequence(seed).spawn(count)[i]``
    and is a continuous function of the unit coordinate ``(x - a)/(b - a)``
    sampled at the nodes, so the refined grid sees the same functions.  In
    each block of ten the first member is a bump concentrated at an
    endpoint and the second changes sign; the rest follow ``recipe``.
    """
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise ValueError(f"need count >= 1, got {count}")
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}; expected one of {', '.join(RECIPES)}")
    x = _unit_x(grid)
    streams = np.random.SeedSequence(seed).spawn(int(count))
    out = np.empty((int(count), grid.n))
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        slot = i % 10
        if slot == 0:
            u = _edge_bump(x, rng)
        elif slot == 1:
            u = _sign_changing(x, rng)
        elif recipe == "smoothed-gaussian" or (recipe == "mixed" and slot % 2 == 0):
            u = _random_series(x, rng)
        else:
            u = _random_bumps(x, rng)
        if not np.any(u):
            u = np.where(np.arange(grid.n) == grid.n // 2, 1.0, 0.0)
        out[i] = u
    out.setflags(write=False)
    return Ensemble(grid, out, int(seed), recipe)


# ---------------------------------------------------------------- helpers


def _xlogx_p(U: np.ndarray, p: float) -> np.ndarray:
    """``|u|^p ln|u|`` with ``0 ln 0 = 0``."""
    a = np.abs(U)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a ** p * np.log(np.where(a > 0, a, 1.0)), 0.0)


def _norm_p(form: AssembledForm, U: np.ndarray) -> np.ndarray:
    return (form.h * np.sum(np.abs(U) ** form.p, axis=-1)) ** (1.0 / form.p)


def _drift(c: float, c_ref: float | None) -> float | None:
    if c_ref is None:
        return None
    scale = max(abs(c), abs(c_ref))
    # constants that are pure roundoff (an empty far field) do not drift
    return 0.0 if scale < ZERO_FLOOR else abs(c_ref - c) / scale


def _finish(name, lhs, rhs, const, const_ref, params, abs_tol, threshold) -> InequalityReport:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    slack = rhs - lhs
    drift = _drift(const, const_ref)
    ok = bool(np.all(slack >= -abs_tol) and math.isfinite(const)
              and (drift is None or drift < threshold))
    params = dict(params, drift_threshold=threshold)
    return InequalityReport(name, np.stack([lhs, rhs, slack], axis=1), float(const),
                            drift, ok, params, abs_tol)


def _pair(form, ensemble, refined):
    yield form, ensemble.functions
    if refined is not None:
        yield refined[0], refined[1].functions


# ---------------------------------------------------------------- checks


def log_sobolev_required(form: AssembledForm, U: np.ndarray) -> np.ndarray:
    """Per-row ``k0`` needed in the p-log-Sobolev inequality (``N = 1``)."""
    p, h = form.p, form.h
    U = np.atleast_2d(U)
    e = np.sum(form.dual(U) * U, axis=-1)
    nrm = _norm_p(form, U)
    ent = h * np.sum(_xlogx_p(U, p), axis=-1)
    return (p * p * ent - e - p * p * nrm ** p * np.log(nrm)) / nrm ** p


def check_log_sobolev(form: AssembledForm, ensemble: Ensemble, *, refined=None,
                      abs_tol: float = 1e-9, threshold: float = DRIFT_THRESHOLD
                      ) -> InequalityReport:
    """``p^2 int |u|^p ln|u| <= E(u,u) + p^2 ||u||^p ln||u|| + k0 ||u||^p``.

    ``k0`` is set to the largest per-sample requirement plus ``abs_tol``.
    """
    consts = []
    for fm, U in _pair(form, ensemble, refined):
        consts.append(float(np.max(log_sobolev_required(fm, U))))
    k0 = consts[0] + abs_tol
    p, h = form.p, form.h
    U = ensemble.functions
    nrm = _norm_p(form, U)
    lhs = p * p * h * np.sum(_xlogx_p(U, p), axis=-1)
    rhs = np.sum(form.dual(U) * U, axis=-1) + p * p * nrm ** p * np.log(nrm) + k0 * nrm ** p
    return _finish("log_sobolev", lhs, rhs, consts[0], consts[1] if refined else None,
                   {"p": p, "N": 1, "k0": k0}, abs_tol, threshold)


def lemma1_ratio(form: AssembledForm, U: np.ndarray) -> np.ndarray:
    """``|E(u,u) - 1/2 [u]^p| / ||u||_p^p`` per row."""
    U = np.atleast_2d(U)
    e = np.sum(form.dual(U) * U, axis=-1)
    half = 0.5 * seminorms(form, U) ** form.p
    return np.abs(e - half) / _norm_p(form, U) ** form.p


def lemma2_ratio(form: AssembledForm, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``|<A''u, v>| / (||u||_p^(p-1) ||v||_p)`` per row."""
    U, V = np.atleast_2d(U), np.atleast_2d(V)
    num = np.abs(np.sum(form.far_dual(U) * V, axis=-1))
    return num / (_norm_p(form, U) ** (form.p - 1.0) * _norm_p(form, V))


def _consecutive(U: np.ndarray):
    if len(U) == 1:
        return U, U
    return U[:-1], U[1:]


def check_lemma_bounds(form: AssembledForm, ensemble: Ensemble, *, refined=None,
                       abs_tol: float = 1e-9, threshold: float = DRIFT_THRESHOLD
                       ) -> tuple[InequalityReport, InequalityReport]:
    """Empirical constants of the two perturbation bounds.

    Lemma 1 pairs ``|E(u,u) - [u]^p/2|`` with ``C ||u||_p^p``; Lemma 2
    pairs ``|<A''u, v>|`` with ``C ||u||_p^(p-1) ||v||_p`` over consecutive
    members ``(u_i, u_{i+1})``.
    """
    p = form.p
    c1, c2 = [], []
    for fm, U in _pair(form, ensemble, refined):
        c1.append(float(np.max(lemma1_ratio(fm, U))))
        c2.append(float(np.max(lemma2_ratio(fm, *_consecutive(U)))))
    U = ensemble.functions
    nrm = _norm_p(form, U)
    e = np.sum(form.dual(U) * U, axis=-1)
    lhs1 = np.abs(e - 0.5 * seminorms(form, U) ** p)
    C1 = c1[0] + abs_tol
    rep1 = _finish("lemma1", lhs1, C1 * nrm ** p, c1[0], c1[1] if refined else None,
                   {"p": p, "C": C1}, abs_tol, threshold)
    Ua, Ub = _consecutive(U)
    lhs2 = np.abs(np.sum(form.far_dual(Ua) * Ub, axis=-1))
    C2 = c2[0] + abs_tol
    rhs2 = C2 * _norm_p(form, Ua) ** (p - 1.0) * _norm_p(form, Ub)
    rep2 = _finish("lemma2", lhs2, rhs2, c2[0], c2[1] if refined else None,
                   {"p": p, "C": C2}, abs_tol, threshold)
    return rep1, rep2


def cor1_terms(form: AssembledForm, U: np.ndarray, delta: float):
    """``(int |u|^p |ln|u||, [u]^p + ||u||_p^(p+delta) + 1)`` per row."""
    U = np.atleast_2d(U)
    p = form.p
    lhs = form.h * np.sum(np.abs(_xlogx_p(U, p)), axis=-1)
    rhs = seminorms(form, U) ** p + _norm_p(form, U) ** (p + delta) + 1.0
    return lhs, rhs


def cor2_ratios(form: AssembledForm, U: np.ndarray, gamma: float,
                rhos=COR2_RHOS) -> np.ndarray:
    """``r(rho) = int |rho v|^p ln(1 + |rho v|)^gamma / rho^p`` with ``[v] = 1``."""
    U = np.atleast_2d(U)
    V = U / seminorms(form, U)[:, None]
    out = np.empty((len(U), len(rhos)))
    for j, r in enumerate(rhos):
        W = np.abs(r * V)
        out[:, j] = form.h * np.sum(W ** form.p * np.log1p(W) ** gamma, axis=-1) / r ** form.p
    return out


def cor3_terms(form: AssembledForm, U: np.ndarray):
    """``(int_{|u|>1} |u|^p ln|u|, [u]^p)`` after rescaling to ``||u||_p = 1``."""
    U = np.atleast_2d(U)
    V = U / _norm_p(form, U)[:, None]
    ent = _xlogx_p(V, form.p)
    lhs = form.h * np.sum(np.where(np.abs(V) > 1.0, ent, 0.0), axis=-1)
    return lhs, seminorms(form, V) ** form.p


def check_corollaries(form: AssembledForm, ensemble: Ensemble, delta: float = 0.5,
                      gamma: float = 0.75, *, refined=None, abs_tol: float = 1e-9,
                      threshold: float = DRIFT_THRESHOLD
                      ) -> tuple[InequalityReport, InequalityReport, InequalityReport]:
    """Reports for the three corollaries of the log-Sobolev inequality.

    Corollary 2 is a decay criterion: ``r(rho)`` must decrease along
    ``rho = 1e-1, ..., 1e-6`` and end below ``1e-3 r(1e-1)``.  Its
    empirical constant is the worst ratio ``r(1e-6) / r(1e-1)``.
    """
    if not delta > 0:
        raise ValueError(f"need delta > 0, got {delta}")
    if not 0 < gamma < 1:
        raise ValueError(f"need gamma in (0, 1), got {gamma}")
    p = form.p
    c1, c2, c3 = [], [], []
    for fm, U in _pair(form, ensemble, refined):
        lhs, rhs = cor1_terms(fm, U, delta)
        c1.append(float(np.max(lhs / rhs)))
        r = cor2_ratios(fm, U, gamma)
        c2.append(float(np.max(r[:, -1] / r[:, 0])))
        lhs3, rhs3 = cor3_terms(fm, U)
        c3.append(float(np.max(lhs3 / rhs3)))
    U = ensemble.functions
    lhs, rhs = cor1_terms(form, U, delta)
    C1 = c1[0] + abs_tol
    rep1 = _finish("corollary1", lhs, C1 * rhs, c1[0], c1[1] if refined else None,
                   {"p": p, "delta": delta, "C_delta": C1}, abs_tol, threshold)
    r = cor2_ratios(form, U, gamma)
    monotone = np.all(np.diff(r, axis=1) < 0, axis=1)
    # a non-monotone member is recorded as a violation of size r(1e-1)
    lhs2 = np.where(monotone, r[:, -1], r[:, 0] + 1e-3 * r[:, 0])
    rep2 = _finish("corollary2", lhs2, 1e-3 * r[:, 0], c2[0], c2[1] if refined else None,
                   {"p": p, "gamma": gamma, "rhos": list(COR2_RHOS), "decay_factor": 1e-3},
                   0.0, threshold)
    lhs3, rhs3 = cor3_terms(form, U)
    C3 = c3[0] + abs_tol
    rep3 = _finish("corollary3", lhs3, C3 * rhs3, c3[0], c3[1] if refined else None,
                   {"p": p, "C": C3}, abs_tol, threshold)
    return rep1, rep2, rep3


def origin_defect(form: AssembledForm, g: NonlinearitySpec, U: np.ndarray,
                  rhos) -> np.ndarray:
    """``e(rho) = |int G(rho v) - lam/p |rho v|^p| / rho^p`` with ``[v] = 1``."""
    U = np.atleast_2d(U)
    p, lam = form.p, g.lam
    V = U / seminorms(form, U)[:, None]
    out = np.empty((len(U), len(rhos)))
    for j, r in enumerate(rhos):
        W = r * V
        a = np.abs(W)
        # same expression as the power primitive, so g = lam psi_p cancels exactly
        out[:, j] = np.abs(form.h * np.sum(g.G(W) - lam * a ** p / p, axis=-1)) / r ** p
    return out


def check_origin_asymptotics(form: AssembledForm, g: NonlinearitySpec, rho_list,
                             ensemble: Ensemble, decay: float = 0.05) -> InequalityReport:
    """``Phi(u) - I_p(u) + lam J_p(u) = o(||u||^p)`` as a decay test.

    ``e(rho)`` must not increase along ``rho_list`` and must end below
    ``decay * e(rho_list[0])``.  Members with ``e`` at roundoff (below
    ``ZERO_FLOOR`` relative to the power term) count as zero and pass.
    """
    rhos = [float(r) for r in rho_list]
    if len(rhos) < 2 or any(b >= a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("rho_list must be strictly decreasing with at least two entries")
    if g.p != form.p:
        raise ValueError(f"nonlinearity has p={g.p} but the form has p={form.p}")
    e = origin_defect(form, g, ensemble.functions, rhos)
    # defects at roundoff relative to the power term count as exact zeros
    V = ensemble.functions / seminorms(form, ensemble.functions)[:, None]
    scale = abs(g.lam) / form.p * form.h * np.sum(np.abs(V) ** form.p, axis=-1) + 1.0
    e = np.where(e <= ZERO_FLOOR * scale[:, None], 0.0, e)
    nonincr = np.all(np.diff(e, axis=1) <= 0, axis=1)
    lhs = np.where(nonincr, e[:, -1], e[:, 0] * (1.0 + decay))
    rhs = decay * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(e[:, 0] > 0, e[:, -1] / e[:, 0], 0.0)
    return _finish("origin_asymptotics", lhs, rhs, float(np.max(ratio)), None,
                   {"p": form.p, "kind": g.kind, "lambda": g.lam, "rhos": rhos,
                    "decay": decay}, 0.0, DRIFT_THRESHOLD)


def run_suite(form: AssembledForm, count: int = 1000, seed: int = 0, recipe: str = "mixed",
              delta: float = 0.5, gamma: float = 0.75, *, refine_grid: bool = True,
              g: NonlinearitySpec | None = None, rho_list=None,
              threshold: float = DRIFT_THRESHOLD) -> list[InequalityReport]:
    """Every inequality report on one ensemble, with the ``n -> 2n+1`` drift."""
    ens = sample_ensemble(form.grid, count, seed, recipe)
    refined = None
    if refine_grid:
        fine = refine(form.grid)
        refined = (assemble_form(fine, form.constants),
                   sample_ensemble(fine, count, seed, recipe))
    reports = [check_log_sobolev(form, ens, refined=refined, threshold=threshold)]
    reports += check_lemma_bounds(form, ens, refined=refined, threshold=threshold)
    reports += check_corollaries(form, ens, delta, gamma, refined=refined, threshold=threshold)
    if g is not None:
        rhos = rho_list if rho_list is not None else [10.0 ** -k for k in range(1, 6)]
        reports.append(check_origin_asymptotics(form, g, rhos, ens))
    return reports


def write_reports(reports: list[InequalityReport], directory: str) -> list[str]:
    """One ``<name>.json`` and ``<name>.csv`` (sample,lhs,rhs,slack) per report."""
    os.makedirs(directory, exist_ok=True)
    written = []
    for rep in reports:
        jpath = os.path.join(directory, f"{rep.name}.json")
        with open(jpath, "w") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        cpath = os.path.join(directory, f"{rep.name}.csv")
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "lhs", "rhs", "slack"])
            for i, (a, b, c) in enumerate(rep.per_sample):
                w.writerow([i, repr(float(a)), repr(float(b)), repr(float(c))])
        written += [jpath, cpath]
    return written
