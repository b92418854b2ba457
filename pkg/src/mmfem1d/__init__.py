"""Arbitrary-order moving-mesh finite elements for 1D moving boundary problems.

A method-of-lines library: mesh vertex positions and per-test-function
masses form one ODE system whose right-hand side recovers the solution,
solves a velocity potential driven by a monitor distribution, recovers a
continuous piecewise linear mesh velocity, and evaluates the conservative
mass rates. Explicit SSP Runge-Kutta stepping, orders 1-3.

Built-in problems: two-phase interface diffusion (Stefan), absorption-
diffusion on a shrinking domain (Crank-Gupta), and porous-medium flow with
moving support.
"""

from .backend import USING_NUMBA, backend_name
from .engine import (MassDistribution, MonitorDistribution, PotentialField,
                     ScalarField, SystemRate, SystemState, VelocityField,
                     ale_rate, evaluate_rhs, gcl_residual, initial_state,
                     interpolate, monitor_distribution, recover_solution,
                     recover_velocity, solve_potential_area,
                     solve_potential_mass, ssp_rk_step)
from .errors import (ConfigError, DegenerateMonitorError, DegenerateWeightError,
                     MeshTanglingError, NumericalError, SingularSystemError)
from .fem import (BandedMatrix, QuadratureRule, TestSpace, assemble_functional,
                  assemble_gradient_functional, assemble_mass,
                  assemble_weighted_stiffness, gauss_rule, lagrange_basis,
                  solve_banded)
from .harness import (RunResult, StudyConfig, build_initial_mesh, emit_outputs,
                      run_convergence_study, run_simulation)
from .mesh import (Mesh1D, build_stefan_bisection, build_stefan_geometric,
                   build_uniform, geometric_ratio, perturb_interior,
                   refine_uniform, write_mesh_csv)
from .metrics import (ErrorRecord, RunSnapshots, boundary_position_error,
                      convergence_rates, self_convergence_error,
                      spacetime_solution_error, write_rates_csv)
from .problems import (ProblemSpec, StefanParameters, cg_exact, cg_fixed_flux,
                       crank_gupta_problem, erf, erfc, pme_boundary,
                       pme_cos_problem, pme_similarity,
                       pme_similarity_problem, problem_weak_forms,
                       stefan_default_parameters, stefan_exact,
                       stefan_phi_root, stefan_problem)

__version__ = "0.1.0"
