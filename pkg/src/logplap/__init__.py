"""Discrete logarithmic p-Laplacian on an interval.

Weak-form assembly, variational eigenvalues, mountain-pass and linking
solvers for ``L u = g(u)``, and empirical checks of the log-Sobolev family
of inequalities.
"""

__version__ = "0.1.0"

from .assembly import (AssembledForm, Constants, apply_Ap, apply_Ap_split, assemble_form,
                       boundary_weight, cell_pair_integral, energy, seminorm)
from .critical_point import (LinkingGeometry, SolverReport, build_linking_geometry_p2,
                             choose_radii, mountain_pass, solve_linking, weak_residual)
from .eigensolver import (EigenPair, SpectrumP2, eigen_residual, first_eigenpair,
                          second_eigenvalue_heuristic, spectrum_p2)
from .functionals import I_p, J_p, phi, phi_lambda, psi_p, rayleigh
from .grid import Grid, GridFunction, build_grid, lp_norm, refine
from .nonlinearity import (NonlinearitySpec, check_growth_conditions, check_superlinearity,
                           eval_G, make_builtin, make_custom)
from .verify import (check_corollaries, check_lemma_bounds, check_log_sobolev,
                     check_origin_asymptotics, run_suite, sample_ensemble)

__all__ = [name for name in dir() if not name.startswith("_")]
