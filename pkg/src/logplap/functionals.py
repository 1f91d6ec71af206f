"""Potentials, Rayleigh quotient and the variational functionals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import AssembledForm, psi
from .grid import GridFunction, check_same_grid

__all__ = [
    "FunctionalValue", "psi_p", "I_p", "J_p", "rayleigh", "phi_lambda", "phi",
    "B_p", "phi_gradient_array", "phi_value_array",
]


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    gradient: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def psi_p(t, p: float):
    """``|t|^(p-2) t``; returns a float for scalar input."""
    if not p > 1:
        raise ValueError(f"need p > 1, got p={p}")
    out = psi(t, p)
    return float(out) if np.ndim(out) == 0 else out


def I_p(form: AssembledForm, u: GridFunction) -> float:
    """``(1/p) E(u, u)``."""
    check_same_grid(form.grid, u.grid)
    return float(form.dual(u.values) @ u.values) / form.p


def J_p(u: GridFunction, p: float) -> float:
    """``(1/p) ||u||_p^p``."""
    if not p > 1:
        raise ValueError(f"need p > 1, got p={p}")
    return float(u.grid.h * np.sum(np.abs(u.values) ** p)) / p


def B_p(u: GridFunction, p: float) -> np.ndarray:
    """Dual vector of ``v -> int |u|^(p-2) u v``."""
    return u.grid.h * psi(u.values, p)


def rayleigh(form: AssembledForm, u: GridFunction) -> float:
    """``I_p(u) / J_p(u)``, invariant under ``u -> t u``."""
    check_same_grid(form.grid, u.grid)
    if u.is_zero():
        raise ValueError("Rayleigh quotient undefined at u = 0")
    p = form.p
    return float(form.dual(u.values) @ u.values) / float(form.h * np.sum(np.abs(u.values) ** p))


def phi_lambda(form: AssembledForm, u: GridFunction, lam: float) -> FunctionalValue:
    """``I_p(u) - lam J_p(u)`` with its gradient."""
    check_same_grid(form.grid, u.grid)
    p = form.p
    r = form.dual(u.values)
    e = float(r @ u.values)
    lp = float(form.h * np.sum(np.abs(u.values) ** p))
    grad = r - lam * form.h * psi(u.values, p)
    return FunctionalValue(e / p - lam * lp / p, grad,
                           {"energy": e, "I_p": e / p, "J_p": lp / p})


def phi_value_array(form: AssembledForm, U: np.ndarray, g) -> np.ndarray:
    """Row-wise ``Phi`` for nodal arrays of shape (..., n)."""
    U = np.asarray(U, dtype=float)
    e = np.sum(form.dual(U) * U, axis=-1)
    return e / form.p - form.h * np.sum(g.G(U), axis=-1)


def phi_gradient_array(form: AssembledForm, U: np.ndarray, g) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    return form.dual(U) - form.h * g.g(U)


def phi(form: AssembledForm, u: GridFunction, g) -> FunctionalValue:
    """``Phi(u) = (1/p) E(u, u) - int G(u)`` and ``Phi'(u)``.

    ``g`` is a :class:`~logplap.nonlinearity.NonlinearitySpec`; the integral
    uses the same midpoint rule as every other integral.
    """
    check_same_grid(form.grid, u.grid)
    r = form.dual(u.values)
    e = float(r @ u.values)
    gint = float(form.h * np.sum(g.G(u.values)))
    grad = r - form.h * g.g(u.values)
    return FunctionalValue(e / form.p - gint, grad,
                           {"energy": e, "I_p": e / form.p, "int_G": gint})
