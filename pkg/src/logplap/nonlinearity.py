"""Nonlinearities ``g`` with primitives ``G`` and a checker for (g1)-(g3).

Built-in kinds (``lam`` stands for the small-amplitude slope lambda):

* ``h1``: ``lam psi_p(t) ln(e + |t|)^theta``
* ``h2``: ``lam psi_p(t) + psi_p(t) ln(1 + |t|)^theta``
* ``h3``: ``lam psi_p(t)`` for ``|t| <= t1``, ``psi_p(t) |ln|t||^theta`` for
  ``|t| >= t0``, and on ``(t1, t0)`` the cubic Hermite interpolant matching
  values and slopes at both ends (oddly extended)
* ``power``: ``lam psi_p(t)``, with the closed-form primitive
* ``custom``: a tabulated ``(t, g)`` profile for ``t > 0``, oddly extended

Every ``g`` is computed as ``sign(t) * g(|t|)`` and every ``G`` as
``G(|t|)``, so oddness and evenness hold bitwise.

The primitive of the non-polynomial kinds is anchored on a geometric table
``G(t_k)`` built once at construction; evaluation adds a short
Gauss-Legendre integral from the nearest anchor below ``|t|``.  Each anchor
step spans a ratio of ``2^(1/8)``, which keeps the local rule at roundoff
accuracy for the smooth profiles in use.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "NonlinearitySpec", "ConditionReport", "SuperlinearityReport", "make_builtin",
    "make_custom", "load_custom_table", "from_callable", "eval_G",
    "check_growth_conditions", "check_superlinearity", "default_t_grid",
    "KINDS",
]

KINDS = ("h1", "h2", "h3", "power", "custom")

_TABLE_LO = 1e-12
_TABLE_HI = 1e16
_PER_OCTAVE = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _gl_segment(f: Callable, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``int_lo^hi f`` by 10-point Gauss-Legendre, elementwise."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = hi - lo
    pts = lo[..., None] + width[..., None] * _GL_X
    return width * np.sum(f(pts) * _GL_W, axis=-1)


def _gl_geometric(f: Callable, lo: float, hi: float, panels: int) -> float:
    """``int_lo^hi f`` on panels equally spaced in ``ln t`` (``0 < lo < hi``)."""
    edges = np.geomspace(lo, hi, panels + 1)
    return float(np.sum(_gl_segment(f, edges[:-1], edges[1:])))


class _Primitive:
    """Anchored primitive of a positive-axis profile ``f`` with ``f(0) = 0``."""

    def __init__(self, f: Callable, breaks: tuple[float, ...] = ()):
        octaves = math.log2(_TABLE_HI / _TABLE_LO)
        count = int(round(octaves * _PER_OCTAVE)) + 1
        nodes = np.geomspace(_TABLE_LO, _TABLE_HI, count)
        # kinks of piecewise profiles become anchors so no local rule straddles one
        extra = [b for b in breaks if _TABLE_LO < b < _TABLE_HI]
        nodes = np.unique(np.concatenate([nodes, extra]))
        head = _gl_geometric(f, _TABLE_LO * 1e-30, _TABLE_LO, 64)
        steps = _gl_segment(f, nodes[:-1], nodes[1:])
        table = np.concatenate([[head], head + np.cumsum(steps)])
        self._f = f
        self._nodes = nodes
        self._table = table
        self._nodes.setflags(write=False)
        self._table.setflags(write=False)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        """``G(a)`` for ``a >= 0``."""
        a = np.asarray(a, dtype=float)
        out = np.zeros_like(a)
        small = (a > 0) & (a < _TABLE_LO)
        if np.any(small):
            out[small] = _gl_segment(self._f, np.zeros(np.count_nonzero(small)), a[small])
        mid = (a >= _TABLE_LO) & (a <= _TABLE_HI)
        if np.any(mid):
            am = a[mid]
            k = np.searchsorted(self._nodes, am, side="right") - 1
            base = self._nodes[k]
            out[mid] = self._table[k] + _gl_segment(self._f, base, am)
        big = a > _TABLE_HI
        for idx in np.flatnonzero(big):
            t = float(a.flat[idx])
            panels = max(8, int(math.ceil(_PER_OCTAVE * math.log2(t / _TABLE_HI))))
            out.flat[idx] = self._table[-1] + _gl_geometric(self._f, _TABLE_HI, t, panels)
        return out


def _hermite(x0: float, x1: float, y0: float, y1: float, d0: float, d1: float):
    """Cubic Hermite on ``[x0, x1]`` as power-basis coefficients in ``s = x - x0``."""
    w = x1 - x0
    c2 = (3.0 * (y1 - y0) / w - 2.0 * d0 - d1) / w
    c3 = (d0 + d1 - 2.0 * (y1 - y0) / w) / (w * w)
    return (y0, d0, c2, c3)


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """A nonlinearity with its primitive and metadata.

    ``g`` and ``G`` act elementwise on arrays.  ``lam`` is the value of the
    small-amplitude limit ``g(t) / psi_p(t)`` the specification promises.
    """

    kind: str
    lam: float
    theta: float
    t0: float
    t1: float
    p: float
    profile: Callable = field(repr=False)          # g on t >= 0
    primitive: Callable = field(repr=False)        # G on t >= 0
    table_path: str | None = None

    def g(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.sign(t) * self.profile(np.abs(t))

    def G(self, t) -> np.ndarray:
        return self.primitive(np.abs(np.asarray(t, dtype=float)))

    def dg(self, t) -> np.ndarray:
        """Central-difference slope of ``g``; used for step-size bounds."""
        t = np.asarray(t, dtype=float)
        d = 1e-6 * np.maximum(1.0, np.abs(t))
        return (self.g(t + d) - self.g(t - d)) / (2.0 * d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "lambda": self.lam, "theta": self.theta,
               "t0": self.t0, "t1": self.t1, "p": self.p}
        if self.table_path is not None:
            out["custom_table_path"] = self.table_path
        return out


def _check_p(p: float) -> None:
    if not (math.isfinite(p) and p > 1):
        raise ValueError(f"need p > 1, got p={p}")


def make_builtin(kind: str, lam: float = 0.0, theta: float = 0.5, t0: float = 3.0,
                 t1: float = 0.5, p: float = 2.0, *, strict: bool = True) -> NonlinearitySpec:
    """One of the closed-form nonlinearities ``h1``, ``h2``, ``h3``, ``power``.

    ``strict=False`` admits ``theta = 1`` so that the limiting variant that
    violates (g2) can be built and fed to the checker.
    """
    _check_p(p)
    if kind not in ("h1", "h2", "h3", "power"):
        raise ValueError(f"unknown builtin kind {kind!r}; expected h1, h2, h3 or power")
    if not math.isfinite(lam):
        raise ValueError(f"lambda must be finite, got {lam}")
    hi_ok = theta < 1 or (not strict and theta == 1)
    if kind != "power" and not (theta > 0 and hi_ok):
        raise ValueError(f"theta must lie in (0, 1), got theta={theta}")
    if kind == "h3":
        if not t0 > 1:
            raise ValueError(f"h3 needs t0 > 1, got t0={t0}")
        if not 0 < t1 < t0:
            raise ValueError(f"h3 needs 0 < t1 < t0, got t1={t1}, t0={t0}")
    pm1 = p - 1.0

    if kind == "power":
        def prof(a):
            return lam * a ** pm1

        def prim(a):
            return lam * a ** p / p
    elif kind == "h1":
        def prof(a):
            return lam * a ** pm1 * np.log(math.e + a) ** theta
        prim = _Primitive(prof)
    elif kind == "h2":
        def prof(a):
            return lam * a ** pm1 + a ** pm1 * np.log1p(a) ** theta
        prim = _Primitive(prof)
    else:
        lt0 = math.log(t0)
        y0, y1 = lam * t1 ** pm1, t0 ** pm1 * lt0 ** theta
        d0 = lam * pm1 * t1 ** (p - 2.0)
        d1 = pm1 * t0 ** (p - 2.0) * lt0 ** theta + theta * t0 ** (p - 2.0) * lt0 ** (theta - 1.0)
        c = _hermite(t1, t0, y0, y1, d0, d1)

        def prof(a):
            a = np.asarray(a, dtype=float)
            s = np.minimum(a, t0) - t1
            mid = c[0] + s * (c[1] + s * (c[2] + s * c[3]))
            with np.errstate(divide="ignore", invalid="ignore"):
                top = a ** pm1 * np.abs(np.log(np.where(a > 0, a, 1.0))) ** theta
            return np.where(a <= t1, lam * a ** pm1, np.where(a >= t0, top, mid))
        prim = _Primitive(prof, breaks=(t1, t0))
    return NonlinearitySpec(kind, float(lam), float(theta), float(t0), float(t1), float(p),
                            prof, prim)


def from_callable(profile: Callable, p: float, lam: float = 0.0, kind: str = "custom",
                  theta: float = float("nan"), t0: float = float("nan"),
                  t1: float = float("nan")) -> NonlinearitySpec:
    """Wrap a vectorised profile ``g`` on ``t >= 0`` (with ``g(0) = 0``)."""
    _check_p(p)
    return NonlinearitySpec(kind, float(lam), theta, t0, t1, float(p), profile,
                            _Primitive(profile))


def load_custom_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``t,g`` CSV; ``t`` must be strictly increasing and positive."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "g"]:
        raise ValueError(f"{path}:1: expected header 't,g'")
    ts, gs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {len(row)}")
        try:
            t, g = float(row[0]), float(row[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry {row!r}") from None
        if not (math.isfinite(t) and math.isfinite(g)):
            raise ValueError(f"{path}:{lineno}: non-finite entry {row!r}")
        if t <= 0:
            raise ValueError(f"{path}:{lineno}: t must be positive, got {t}")
        if ts and t <= ts[-1]:
            raise ValueError(f"{path}:{lineno}: t must be strictly increasing")
        ts.append(t)
        gs.append(g)
    if len(ts) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    return np.array(ts), np.array(gs)


def make_custom(t: np.ndarray, g: np.ndarray, p: float, table_path: str | None = None
                ) -> NonlinearitySpec:
    """Tabulated profile, oddly extended.

    Inside the table ``g`` is the monotone (PCHIP) interpolant of the data.
    Outside it the ratio ``r = g / t^(p-1)`` is extended: below the first
    row ``r`` is frozen, so ``lam`` is the first row's ratio; above the last
    row ``r`` follows the power of ``ln t`` through the last two rows (when
    both lie above ``t = 1`` with positive ratios, else ``r`` is frozen).
    The growth limits of a table are therefore limits of this extension.
    """
    _check_p(p)
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    pm1 = p - 1.0
    inner = PchipInterpolator(t, g)
    r = g / t ** pm1
    r_lo, r_hi = float(r[0]), float(r[-1])
    tmin, tmax = float(t[0]), float(t[-1])
    expo = 0.0
    if t[-2] > 1 and r[-2] > 0 and r[-1] > 0:
        expo = math.log(r[-1] / r[-2]) / math.log(math.log(t[-1]) / math.log(t[-2]))
    log_top = math.log(tmax) if tmax > 1 else 1.0

    def prof(a):
        a = np.asarray(a, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            lo = r_lo * a ** pm1
            la = np.log(np.maximum(a, tmax))
            hi = r_hi * a ** pm1 * (la / log_top) ** expo
            mid = inner(np.clip(a, tmin, tmax))
        return np.where(a < tmin, lo, np.where(a > tmax, hi, mid))

    return NonlinearitySpec("custom", r_lo, float("nan"), float("nan"), float("nan"),
                            float(p), prof, _Primitive(prof, breaks=tuple(t)), table_path)


def eval_G(spec: NonlinearitySpec, t) -> float | np.ndarray:
    """``G(t) = int_0^t g``; even, with ``G(0) = 0``."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise ValueError("eval_G needs finite arguments")
    out = spec.G(t_arr)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("primitive evaluation overflowed")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- checker


@dataclass
class ConditionReport:
    g1_limit: float
    g2_limit: float
    g3_feasible: bool
    g3_beta: float
    g3_t0: float
    g1_pass: bool
    g2_pass: bool
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return self.g1_pass and self.g2_pass and self.g3_feasible

    def to_dict(self) -> dict:
        return {
            "g1_limit": self.g1_limit, "g1_pass": self.g1_pass,
            "g2_limit": self.g2_limit, "g2_pass": self.g2_pass,
            "g3_feasible": self.g3_feasible, "g3_beta": self.g3_beta, "g3_t0": self.g3_t0,
            "passed": self.passed,
            "samples": {k: [float(x) for x in v] for k, v in self.samples.items()},
        }


def default_t_grid(lo: float = 1e-6, hi: float = 1e6, per_decade: int = 10) -> np.ndarray:
    """Log-spaced magnitudes over ``[lo, hi]`` (signs are added by the checker)."""
    decades = math.log10(hi / lo)
    return np.geomspace(lo, hi, int(round(decades * per_decade)) + 1)


def psi_pow(t, p: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def _aitken(x0: float, x1: float, x2: float) -> float:
    d1, d2 = x1 - x0, x2 - x1
    dd = d2 - d1
    if not math.isfinite(dd) or abs(dd) <= 1e-14 * max(abs(x0), abs(x1), abs(x2), 1e-300):
        return x2
    return x2 - d2 * d2 / dd


def check_growth_conditions(spec: NonlinearitySpec, t_grid: np.ndarray | None = None,
                            g1_tol: float = 1e-2, g2_tol: float = 0.05,
                            beta_floor: float = 1e-6) -> ConditionReport:
    """Numerical evidence for (g1), (g2) and a feasible ``(beta, t0)`` for (g3).

    (g1): the ratio ``g / psi_p`` at the smallest magnitude and the two decades
    above it is Aitken
    extrapolated; both signs must land within ``g1_tol`` (scaled by
    ``max(1, |lam|)``) of ``spec.lam``.

    (g2): the ratio ``g / (psi_p ln|t|)`` is sampled at ``ln|t| = L/8, L/4,
    L/2, L`` where ``L`` is the larger of ``ln(max grid)`` and ``600/p``.  A
    power of ``ln|t|`` is geometric under doubling of ``ln|t|``, which Aitken
    removes exactly, provided the differences contract; growing
    differences are reported as an infinite limit.  The same is done with ``lam_hat / ln|t|`` subtracted
    (``lam_hat`` the (g1) estimate, a term with limit zero), and the variant
    whose two overlapping Aitken estimates agree best is reported.

    (g3): with ``q(t) = (t g - p G) ln|t| / |t|^p`` the smallest grid point
    ``t0 > 1`` with ``q >= beta_floor`` on every sample beyond it is chosen;
    ``beta = min(q)`` there, capped below one.
    """
    p = spec.p
    ts = np.asarray(default_t_grid() if t_grid is None else t_grid, dtype=float)
    ts = np.unique(np.abs(ts[ts != 0]))
    if len(ts) < 3:
        raise ValueError("t grid needs at least three distinct magnitudes")
    samples: dict[str, np.ndarray] = {"t": ts}

    small = ts[0] * np.array([1.0, 10.0, 100.0])
    lim1 = []
    for sgn in (1.0, -1.0):
        r = spec.g(sgn * small) / (sgn * small ** (p - 1.0))
        lim1.append(_aitken(*r[::-1]))
    g1 = max(lim1, key=lambda v: abs(v - spec.lam))
    g1_pass = bool(abs(g1 - spec.lam) <= g1_tol * max(1.0, abs(spec.lam)))

    # the ratio decays like powers of ln|t|, invisible over a few decades, so
    # the points sit far out at ln|t| = L/8, L/4, L/2, L with t^p finite
    L = max(math.log(ts[-1]), 600.0 / p)
    big = np.exp(L / 2.0 ** np.arange(3, -1, -1))
    lim2 = []
    with np.errstate(over="ignore", invalid="ignore"):
        for sgn in (1.0, -1.0):
            t = sgn * big
            base = spec.g(t) / (psi_pow(t, p) * np.log(big))
            # lam/ln|t| -> 0, so the ratio with lam*psi removed has the same
            # limit; keep whichever variant extrapolates most consistently
            shifted = base - g1 / np.log(big)
            d = np.diff(base)
            if abs(d[-1]) > 1e-8 * max(1.0, abs(base[-1])) and abs(d[-1]) >= abs(d[-2]):
                # not contracting: Aitken would return the antilimit of a
                # diverging geometric sequence, so report the divergence
                lim2.append(math.copysign(math.inf, d[-1]))
                continue
            best = None
            for r in (base, shifted):
                early, late = _aitken(*r[:3]), _aitken(*r[1:])
                spread = abs(late - early)
                if best is None or spread < best[0]:
                    best = (spread, late)
            lim2.append(best[1])
    g2 = max(lim2, key=abs)
    g2_pass = bool(math.isfinite(g2) and abs(g2) <= g2_tol)
    samples["g2_points"] = big

    above = ts[ts > 1]
    q_pos = q_neg = np.array([])
    feasible, beta, t0 = False, float("nan"), float("nan")
    if len(above):
        for sgn in (1.0, -1.0):
            t = sgn * above
            q = (t * spec.g(t) - p * spec.G(t)) * np.log(above) / above ** p
            if sgn > 0:
                q_pos = q
            else:
                q_neg = q
        q = np.minimum(q_pos, q_neg)
        # suffix minima: the worst q from index k to the end
        tail = np.minimum.accumulate(q[::-1])[::-1]
        ok = np.flatnonzero(tail >= beta_floor)
        if len(ok):
            k = int(ok[0])
            feasible = True
            t0 = float(above[k])
            beta = float(min(tail[k], 1.0 - 1e-9))
        samples["g3_t"] = above
        samples["g3_q"] = q
    return ConditionReport(float(g1), float(g2), feasible, beta, t0, g1_pass, g2_pass, samples)


@dataclass
class SuperlinearityReport:
    t: np.ndarray
    ratio: np.ndarray
    increasing_from: float
    eventually_increasing: bool
    crossings: dict
    lower_bound_holds: bool | None
    beta: float
    t0: float

    def to_dict(self) -> dict:
        return {
            "increasing_from": self.increasing_from,
            "eventually_increasing": self.eventually_increasing,
            "crossings": {str(k): v for k, v in self.crossings.items()},
            "lower_bound_holds": self.lower_bound_holds,
            "beta": self.beta, "t0": self.t0,
            "ratio_first": float(self.ratio[0]), "ratio_last": float(self.ratio[-1]),
        }


def check_superlinearity(spec: NonlinearitySpec, t_max: float = 1e6,
                         levels: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0),
                         report: ConditionReport | None = None,
                         samples: int = 400) -> SuperlinearityReport:
    """Sampled behaviour of ``G(t) / |t|^p`` on ``[t0, t_max]`` (both signs).

    ``crossings[a]`` is the first sample ``t`` beyond which the ratio stays
    at or above ``a`` (``None`` if it never does).  When (g3) is feasible
    the logarithmic lower bound ``G(t0)/t0^p + beta ln(ln t / ln t0)`` is
    checked at every sample.
    """
    p = spec.p
    rep = report if report is not None else check_growth_conditions(spec)
    t0 = rep.g3_t0 if rep.g3_feasible else (spec.t0 if spec.t0 > 1 else math.e)
    if not t_max > t0:
        raise ValueError(f"need t_max > t0 = {t0}")
    t = np.geomspace(t0, t_max, samples)
    ratio = np.minimum(spec.G(t), spec.G(-t)) / t ** p
    dec = np.flatnonzero(np.diff(ratio) <= 0)
    start = 0 if len(dec) == 0 else int(dec[-1]) + 1
    eventually = start < len(t) - 2
    crossings = {}
    for a in levels:
        bad = np.flatnonzero(ratio < a)
        if len(bad) == 0:
            crossings[a] = float(t[0])
        elif bad[-1] < len(t) - 1:
            crossings[a] = float(t[bad[-1] + 1])
        else:
            crossings[a] = None
    holds = None
    if rep.g3_feasible:
        base = spec.G(t0) / t0 ** p
        bound = base + rep.g3_beta * np.log(np.log(t) / math.log(t0))
        holds = bool(np.all(ratio >= bound - 1e-12 * np.maximum(1.0, np.abs(bound))))
    return SuperlinearityReport(t, ratio, float(t[start]), bool(eventually), crossings,
                                holds, rep.g3_beta, t0)
