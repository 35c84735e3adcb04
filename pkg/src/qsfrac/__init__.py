"""Discrete quasistatic brittle fracture: nonlinear second-gradient model and its linear limit."""

from .crack import CrackHistory, CrackState, DomainPartition, accumulate, bad_set, components, crack_measure
from .energy import (
    DistanceDensity,
    ElasticTensor,
    EnergyBreakdown,
    Field,
    KirchhoffDetDensity,
    ModelParams,
    cell_gradient,
    density_eval,
    density_grad,
    discrete_hessian_term,
    dof_map,
    linear_energy,
    linearized_tensor,
    nonlinear_energy,
)
from .linearize import (
    ConvergenceReport,
    balance_residual,
    component_rotations,
    convergence_report,
    cutoff,
    interior_work,
    reflection_extend,
    rescale,
)
from .mesh import GridSpec, Mesh, build_mesh, crackable_interfaces
from .solver import (
    BoundaryProgram,
    SolveOptions,
    TimePartition,
    Trajectory,
    brute_force_step,
    elastic_solve_linear,
    elastic_solve_nonlinear,
    evolve,
    incremental_step,
    run_evolution,
    simple_shear,
    uniaxial_stretch,
    work_integral,
)

__version__ = "0.1.0"

__all__ = [
    "accumulate",
    "bad_set",
    "balance_residual",
    "BoundaryProgram",
    "brute_force_step",
    "build_mesh",
    "cell_gradient",
    "component_rotations",
    "components",
    "convergence_report",
    "ConvergenceReport",
    "crack_measure",
    "crackable_interfaces",
    "CrackHistory",
    "CrackState",
    "cutoff",
    "density_eval",
    "density_grad",
    "discrete_hessian_term",
    "DistanceDensity",
    "dof_map",
    "DomainPartition",
    "elastic_solve_linear",
    "elastic_solve_nonlinear",
    "ElasticTensor",
    "EnergyBreakdown",
    "evolve",
    "Field",
    "GridSpec",
    "incremental_step",
    "interior_work",
    "KirchhoffDetDensity",
    "linear_energy",
    "linearized_tensor",
    "Mesh",
    "ModelParams",
    "nonlinear_energy",
    "reflection_extend",
    "rescale",
    "run_evolution",
    "simple_shear",
    "SolveOptions",
    "TimePartition",
    "Trajectory",
    "uniaxial_stretch",
    "work_integral",
]
