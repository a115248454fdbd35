"""Multistep integrators for Hamiltonian systems with structure checks.

Exact-rational order analysis, several stepping families (plain multistep,
one-leg, generalized, predictor-corrector, partitioned), long-run energy
experiments on the harmonic oscillator, and numerical certificates for
symplecticity-type properties of the window transfer map.
"""

from .methods import (
    AnalysisReport,
    MethodError,
    MethodSpec,
    PolyPair,
    REGISTRY_NAMES,
    analyze,
    builtin_methods,
    characteristic_polynomials,
    defect_horizon,
    format_method,
    format_report,
    is_irreducible,
    is_symmetric,
    lambda_matrix,
    order_analysis,
    parse_method,
    report_to_dict,
    root_condition,
)
from .systems import (
    GradientField,
    LinearHamiltonian,
    hamiltonian_energy,
    load_linear_system,
    sho,
    sho_exact,
    structure_matrix,
)
from .integrators import (
    ConvergenceError,
    PCPair,
    PartitionedPair,
    SingularStepError,
    SolverConfig,
    StepFailure,
    Trajectory,
    exact_start,
    generalized_step,
    integrate,
    lmm_step,
    oneleg_step,
    pad_method,
    partitioned_step,
    pc_step,
    rk4_start,
    step_residual,
    window_matrix,
)
from .geometry import (
    StepTransitionMatrix,
    StructureDefectReport,
    TransferMatrix,
    area_defect,
    energy_drift,
    g_symplecticity_defect,
    numerical_jacobian,
    reversibility_residual,
    step_transition,
    transfer_matrix,
)
from .experiments import (
    BehaviorThresholds,
    LongRunReport,
    Scenario,
    ScenarioResult,
    builtin_pairs,
    builtin_scenarios,
    figure_scenarios,
    format_scenario,
    long_run_report,
    parse_scenario,
    resolve_scheme,
    run_scenario,
)

__version__ = "0.1.0"
