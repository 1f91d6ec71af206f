"""Discrete energy form of the logarithmic p-Laplacian on an interval.

For piecewise-constant ``u, v`` vanishing outside ``(a, b)`` the form splits as

* near field: unordered cell pairs ``i < j`` with centre distance below 1,
  weighted by ``C`` times the exact cell-pair integral of ``1/|x-y|``;
* boundary escape: pairs ``(x in cell i, y outside the interval, |x-y| < 1)``
  collapse to the local weight ``kappa_i * h``;
* far field: cell pairs with centre distance at least 1, midpoint weight
  ``C h^2 / |x_i - x_j|`` applied to
  ``psi(u_i-u_j)(v_i-v_j) - psi(u_i) v_i - psi(u_j) v_j``.  Pairs with one
  point outside the interval contribute nothing to this bracket, so the
  far field is summed over interior pairs only;
* zero-order term ``rho * h * sum psi(u_i) v_i``.

The near field together with the boundary escape is the operator ``A'``
(it realises the seminorm, ``<A'u, u> = [u]^p / 2``); far field plus the
zero-order term is ``A''``.  Same-cell pairs contribute nothing since a
piecewise-constant function has zero increments inside a cell.

Every contraction ``energy(u, v)`` is the dot product of the dual vector
``apply_Ap(u)`` with ``v``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, GridFunction, check_same_grid

__all__ = [
    "Constants", "AssembledForm", "cell_pair_integral", "boundary_weight",
    "assemble_form", "energy", "apply_Ap", "apply_Ap_split", "seminorm",
    "psi", "write_weight_tables",
]

# batch rows per chunk keep the (rows, n, n) difference tensor near 16 MB
_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True)
class Constants:
    """Normalising constants ``C_{1,p}`` and ``rho_1`` plus the exponent."""

    C: float = 1.0
    rho: float = 0.0
    p: float = 2.0
    N: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.C) and self.C > 0):
            raise ValueError(f"constants.C must be a positive finite real, got {self.C}")
        if not math.isfinite(self.rho):
            raise ValueError(f"constants.rho must be finite, got {self.rho}")
        if not (math.isfinite(self.p) and self.p > 1):
            raise ValueError(f"constants.p must satisfy p > 1, got {self.p}")
        if self.N != 1:
            raise ValueError(f"only N = 1 is supported, got N={self.N}")


def psi(t, p: float):
    """Odd power ``|t|^(p-2) t``, exactly odd in floating point."""
    t = np.asarray(t, dtype=float)
    if p == 2:
        return t.copy()
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def _pair_integral_unit(k: int) -> float:
    # (k+1)ln(k+1) - 2k ln k + (k-1)ln(k-1) = sum_m k^(1-2m) / (m(2m-1)),
    # which avoids the cancellation of the second difference for large k
    if k == 1:
        return 2.0 * math.log(2.0)
    x = 1.0 / k
    x2 = x * x
    term = x
    total = 0.0
    m = 1
    while True:
        inc = term / (m * (2 * m - 1))
        total += inc
        if inc < 1e-18 * total:
            return total
        term *= x2
        m += 1


def cell_pair_integral(h: float, k: int) -> float:
    """``int_0^h int_{kh}^{(k+1)h} dy dx / |x - y|`` in closed form.

    With ``F(t) = t ln t`` the integral is the second difference
    ``F((k+1)h) - 2F(kh) + F((k-1)h)``; the ``ln h`` parts cancel and
    leave ``h`` times a function of ``k`` alone.
    """
    if not h > 0:
        raise ValueError(f"need h > 0, got {h}")
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"need a positive integer cell offset, got k={k}")
    return h * _pair_integral_unit(int(k))


def boundary_weight(grid: Grid, constants: Constants) -> np.ndarray:
    """``kappa(x) = C * int_{B_1(x) minus (a,b)} |x-y|^-1 dy`` at the nodes."""
    x = grid.nodes
    left = -np.log(np.minimum(1.0, x - grid.a))
    right = -np.log(np.minimum(1.0, grid.b - x))
    return constants.C * (np.maximum(0.0, left) + np.maximum(0.0, right))


@dataclass(frozen=True)
class AssembledForm:
    grid: Grid
    constants: Constants
    near_weights: np.ndarray = field(repr=False)   # (n, n) symmetric, zero diagonal
    far_pairs: np.ndarray = field(repr=False)      # (m, 2) index pairs i < j
    far_weights: np.ndarray = field(repr=False)    # (m,)
    kappa: np.ndarray = field(repr=False)          # (n,)
    mass: float
    near_offsets: np.ndarray = field(repr=False)   # weight per offset k = 1..band
    _far_dense: np.ndarray = field(repr=False)
    _far_rowsum: np.ndarray = field(repr=False)

    @property
    def p(self) -> float:
        return self.constants.p

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def band(self) -> int:
        return len(self.near_offsets)

    def near_dual(self, U: np.ndarray) -> np.ndarray:
        """``A'`` applied to nodal arrays of shape (..., n)."""
        U = np.asarray(U, dtype=float)
        p = self.p
        diag = (self.kappa * self.grid.h) * psi(U, p)
        return _contract(self.near_weights, U, p) + diag

    def far_dual(self, U: np.ndarray) -> np.ndarray:
        """``A''`` applied to nodal arrays of shape (..., n)."""
        U = np.asarray(U, dtype=float)
        p = self.p
        pu = psi(U, p)
        out = (self.mass - self._far_rowsum) * pu
        if len(self.far_weights):
            out = out + _contract(self._far_dense, U, p)
        return out

    def dual(self, U: np.ndarray) -> np.ndarray:
        """``A_p`` applied to nodal arrays of shape (..., n)."""
        return self.near_dual(U) + self.far_dual(U)

    def matrix(self) -> np.ndarray:
        """Energy matrix ``M_ij = E(e_i, e_j)``; only meaningful for p = 2."""
        if self.p != 2:
            raise ValueError("the energy matrix exists only for p = 2")
        return self.dual(np.eye(self.grid.n))


def _contract(W: np.ndarray, U: np.ndarray, p: float) -> np.ndarray:
    """``r_i = sum_j W_ij psi(U_i - U_j)`` over the last axis."""
    n = W.shape[0]
    if U.ndim == 1:
        return np.sum(W * psi(U[:, None] - U[None, :], p), axis=1)
    flat = U.reshape(-1, n)
    out = np.empty_like(flat)
    step = max(1, _CHUNK_ELEMS // max(1, n * n))
    for s in range(0, flat.shape[0], step):
        blk = flat[s:s + step]
        out[s:s + step] = np.sum(W * psi(blk[:, :, None] - blk[:, None, :], p), axis=2)
    return out.reshape(U.shape)


def assemble_form(grid: Grid, constants: Constants | None = None) -> AssembledForm:
    constants = constants or Constants()
    n, h, C = grid.n, grid.h, constants.C
    # classification by centre distance k*h < 1, i.e. k*(b-a) < n+1; cells
    # straddling the cutoff go wholesale
    band = int(np.count_nonzero(np.arange(1, n) * grid.length < n + 1))
    near_offsets = np.array([C * cell_pair_integral(h, k) for k in range(1, band + 1)])
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    near = np.zeros((n, n))
    far = np.zeros((n, n))
    if band:
        mask = (idx >= 1) & (idx <= band)
        near[mask] = near_offsets[idx[mask] - 1]
    far_mask = idx > band
    far[far_mask] = C * h / idx[far_mask]
    iu, ju = np.nonzero(np.triu(far_mask, 1))
    far_pairs = np.stack([iu, ju], axis=1) if len(iu) else np.zeros((0, 2), dtype=int)
    far_weights = far[iu, ju]
    for arr in (near, far, near_offsets, far_weights, far_pairs):
        arr.setflags(write=False)
    kappa = boundary_weight(grid, constants)
    kappa.setflags(write=False)
    rowsum = far.sum(axis=1)
    rowsum.setflags(write=False)
    return AssembledForm(grid, constants, near, far_pairs, far_weights, kappa,
                         constants.rho * h, near_offsets, far, rowsum)


def _check(form: AssembledForm, *fs: GridFunction):
    for f in fs:
        check_same_grid(form.grid, f.grid)


def apply_Ap(form: AssembledForm, u: GridFunction) -> np.ndarray:
    """Dual vector ``r`` with ``r . v = energy(form, u, v)`` for every ``v``."""
    _check(form, u)
    return form.dual(u.values)


def apply_Ap_split(form: AssembledForm, u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """The pieces ``(A'u, A''u)``; they sum to ``apply_Ap(form, u)``."""
    _check(form, u)
    return form.near_dual(u.values), form.far_dual(u.values)


def energy(form: AssembledForm, u: GridFunction, v: GridFunction) -> float:
    _check(form, u, v)
    return float(form.dual(u.values) @ v.values)


def seminorm(form: AssembledForm, u: GridFunction) -> float:
    """Discrete ``[u]_p = (2 <A'u, u>)^(1/p)``."""
    _check(form, u)
    val = 2.0 * float(form.near_dual(u.values) @ u.values)
    return max(val, 0.0) ** (1.0 / form.p)


def seminorms(form: AssembledForm, U: np.ndarray) -> np.ndarray:
    """Row-wise seminorm of a batch of nodal arrays."""
    U = np.asarray(U, dtype=float)
    val = 2.0 * np.sum(form.near_dual(U) * U, axis=-1)
    return np.maximum(val, 0.0) ** (1.0 / form.p)


def write_weight_tables(form: AssembledForm, directory: str) -> None:
    """Dump ``near.csv``/``far.csv`` (row,col,weight) and ``kappa.csv`` (node,value)."""
    os.makedirs(directory, exist_ok=True)
    n = form.grid.n
    with open(os.path.join(directory, "near.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "weight"])
        for i in range(n):
            for j in range(i + 1, min(n, i + form.band + 1)):
                w.writerow([i, j, repr(float(form.near_weights[i, j]))])
    with open(os.path.join(directory, "far.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "weight"])
        for (i, j), wt in zip(form.far_pairs, form.far_weights):
            w.writerow([int(i), int(j), repr(float(wt))])
    with open(os.path.join(directory, "kappa.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "value"])
        for i, k in enumerate(form.kappa):
            w.writerow([i, repr(float(k))])
