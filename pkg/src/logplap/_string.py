"""Climbing-string minimax over discretised paths.

Shared by the second-eigenvalue heuristic (paths on the constraint
manifold) and the mountain-pass solver (paths in the full space).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import AssembledForm


def hessian_bound(form: AssembledForm, U: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """Gershgorin bound on the Hessian of ``I_p`` divided by ``h``, row-wise.

    For p < 2 the factor ``|d|^(p-2)`` is capped at ``floor`` relative to
    ``max|u|`` so the bound stays finite near coincident values.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    p, h = form.p, form.h
    W = form.near_weights + form._far_dense
    diag = form.kappa * h + np.abs(form.mass - form._far_rowsum)
    if p == 2:
        rows = 2.0 * W.sum(axis=1) + diag
        return np.broadcast_to(np.max(rows) / h, U.shape[:1]).copy()
    out = np.empty(U.shape[0])
    for k, u in enumerate(U):
        scale = max(np.max(np.abs(u)), 1e-300)
        d = np.abs(u[:, None] - u[None, :])
        a = np.abs(u)
        if p < 2:
            d = np.maximum(d, floor * scale)
            a = np.maximum(a, floor * scale)
        rows = 2.0 * np.sum(W * d ** (p - 2.0), axis=1) + diag * a ** (p - 2.0)
        out[k] = (p - 1.0) * np.max(rows) / h
    return out


@dataclass
class StringResult:
    knots: np.ndarray
    values: np.ndarray
    index: int
    residual: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def _redistribute(pts: np.ndarray) -> np.ndarray:
    """Equal arc-length resampling of a polyline, endpoints kept bitwise."""
    if len(pts) <= 2:
        return pts
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return pts
    target = np.linspace(0.0, s[-1], len(pts))
    out = pts.copy()
    j = 0
    for k in range(1, len(pts) - 1):
        while j < len(seg) - 1 and s[j + 1] < target[k]:
            j += 1
        w = 0.0 if seg[j] == 0 else (target[k] - s[j]) / seg[j]
        out[k] = (1.0 - w) * pts[j] + w * pts[j + 1]
    return out


def climbing_string(knots, evaluate, residual, lipschitz, *, tol, max_iter,
                    project=None, radial=False, record_every=25):
    """Minimise the path maximum over paths with pinned endpoints.

    ``evaluate(X)`` returns ``(values, directions)`` for the knots in ``X``,
    where ``directions`` are the (metric-scaled) gradients.  The knot with
    the largest value climbs: it ascends along the local chord tangent and
    descends across it, so its fixed points are exactly critical points.
    The remaining interior knots descend across the path, and each side of
    the climbing knot is redistributed by arc length.  With ``radial=True``
    the knots live on a manifold reached by radial projection, and tangents
    are taken orthogonal to each knot's own ray.
    """
    X = np.array(knots, dtype=float)
    m = len(X)
    if m < 3:
        raise ValueError("need at least three knots")
    proj = project if project is not None else (lambda Y: Y)
    vals, grads = evaluate(X)
    trace = []
    res = np.inf
    k = 1
    for it in range(1, max_iter + 1):
        k = 1 + int(np.argmax(vals[1:-1]))
        res = residual(X[k], grads[k])
        if it % record_every == 1:
            trace.append((it, k, float(vals[k]), float(res)))
        if res <= tol:
            trace.append((it, k, float(vals[k]), float(res)))
            return StringResult(X, vals, k, res, it, True, trace)
        steps = 1.0 / lipschitz(X)
        tang = X[2:] - X[:-2]
        if radial:
            # on a radially projected manifold only moves across the ray count
            Xi = X[1:-1]
            tang = tang - np.sum(tang * Xi, axis=1, keepdims=True) / np.sum(Xi * Xi, axis=1, keepdims=True) * Xi
        tang /= np.maximum(np.linalg.norm(tang, axis=1, keepdims=True), 1e-300)
        G = grads[1:-1]
        along = np.sum(G * tang, axis=1, keepdims=True)
        move = G - along * tang
        move[k - 1] = G[k - 1] - 2.0 * along[k - 1] * tang[k - 1]
        X[1:-1] = proj(X[1:-1] - steps[1:-1, None] * move)
        vals, grads = evaluate(X)
        kk = 1 + int(np.argmax(vals[1:-1]))
        X[: kk + 1] = _redistribute(X[: kk + 1])
        X[kk:] = _redistribute(X[kk:])
        X[1:-1] = proj(X[1:-1])
        vals, grads = evaluate(X)
    k = 1 + int(np.argmax(vals[1:-1]))
    res = residual(X[k], grads[k])
    trace.append((max_iter, k, float(vals[k]), float(res)))
    return StringResult(X, vals, k, res, max_iter, res <= tol, trace)
