"""Multilevel (quasi-)Monte Carlo estimation of the smallest eigenvalue of a
stochastic convection-diffusion operator on the unit square."""

__version__ = "0.1.0"

from .assembly import GALERKIN, SUPG, AssembledSystem, assemble, peclet, tau
from .eigensolvers import (EigenResult, MisconvergenceRisk, NearSingular, NotConverged,
                           SolverSettings, arnoldi_smallest, coarse_initial_guess,
                           detect_instability, linear_solve, rqi, tg_rqi)
from .estimators import (LevelStats, MLResult, Problem, fit_rates, homotopy_schedule,
                         mc_estimate, mlmc_estimate, mlmc_homotopy_estimate, mlqmc_estimate,
                         optimal_samples, positivity_check)
from .mesh import Mesh, build_mesh, prolongate
from .random_fields import Constant, FieldConfig, StreamField, eval_kappa, eval_velocity
from .sampling import LatticeRule, lattice_point, mc_sample

__all__ = [
    "GALERKIN", "SUPG", "AssembledSystem", "assemble", "peclet", "tau",
    "EigenResult", "MisconvergenceRisk", "NearSingular", "NotConverged", "SolverSettings",
    "arnoldi_smallest", "coarse_initial_guess", "detect_instability", "linear_solve", "rqi",
    "tg_rqi", "LevelStats", "MLResult", "Problem", "fit_rates", "homotopy_schedule",
    "mc_estimate", "mlmc_estimate", "mlmc_homotopy_estimate", "mlqmc_estimate",
    "optimal_samples", "positivity_check", "Mesh", "build_mesh", "prolongate", "Constant",
    "FieldConfig", "StreamField", "eval_kappa", "eval_velocity", "LatticeRule",
    "lattice_point", "mc_sample",
]
