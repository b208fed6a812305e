"""Mesh-free solvers for advection-diffusion PDEs on manifold point clouds.

Spatial derivatives are estimated with local Gaussian kernels (diffusion
maps); boundaries are handled by a ghost-point collar along estimated
outward normals; time stepping is implicit Euler; a pseudo-spectral
Galerkin variant solves viscous Burgers on 1D curves.
"""

from .geometry import (
    CloudError,
    NeighborLists,
    PointCloud,
    knn_search,
    load_point_cloud,
    sample_annulus,
    sample_circle,
    sample_ellipse,
    sample_semi_torus,
    sample_sine_curve,
)
from .kernel import (
    BandwidthReport,
    ConditioningError,
    DiffusionOperator,
    KernelConfig,
    TuningError,
    assemble_dm_operator,
    assemble_vcdm_operator,
    default_epsilon_grid,
    eval_local_kernel,
    tune_bandwidth,
)
from .ghost import (
    ExtrapolationMatrix,
    GhostConstructionError,
    GhostFrame,
    GpdmBlocks,
    NormalEstimationError,
    assemble_gpdm_operator,
    build_extrapolation_matrix,
    build_ghost_points,
    estimate_h,
    estimate_normal_kernel,
    estimate_normal_secant,
    ghost_layer_count,
    tangent_project,
)
from .timestep import (
    SddFactorization,
    SolutionState,
    SolverError,
    StabilityReport,
    TimeStepConfig,
    implicit_matrix,
    solve_sdd,
    stability_report,
    step_closed,
    step_dirichlet,
    step_neumann,
)
from .spectral import (
    EigenBasis,
    SpectralError,
    SpectralState,
    assemble_gradient_operator,
    burgers_step,
    eigendecompose,
    initial_coefficients,
    reconstruct,
)
from .problems import ManufacturedProblem, get_problem, problem_names
from .harness import (
    Comparison,
    EpsilonSchedule,
    ExperimentResult,
    compare_solvers,
    emit_plots,
    error_norms,
    heat_on_ingested_cloud,
    run_burgers,
    run_experiment,
    run_single,
)

__version__ = "0.1.0"
