"""Reduced-order modeling of Stratonovich SDEs and stochastic
Hamiltonian systems.

The library couples structure-aware snapshot reduction (plain
orthogonal projection, symplectic cotangent-lift projection, and
greedy interpolation of nonlinear terms) with a family of stochastic
integrators, Monte Carlo path stacking, and two built-in benchmark
systems.  The command line entry point ``sderom`` drives the
offline/online pipeline on top of the same primitives.
"""

from .config import ConfigError, RunConfig, build_config, config_hash, load_config
from .ensemble import (
    EnsembleResult,
    StackedHamiltonian,
    StackedSDE,
    error_metrics,
    pod_reduced_stacked,
    psd_reduced_stacked,
    run_ensemble,
    snapshots_from_ensemble,
    stack_hamiltonian,
    stack_sde,
)
from .integrators import (
    METHODS,
    energy_trace,
    integrate,
    jacobian_symplecticity_defect,
    make_stepper,
    poisson_bracket,
)
from .kubo import (
    KuboConfig,
    kubo_exact,
    kubo_exact_ensemble,
    kubo_exact_mean,
    kubo_system,
)
from .nls import NLSConfig, build_nls_system, soliton_initial_state, soliton_modulus
from .paths import RngSpec, TimeGrid, WienerPath, coarsen_wiener, generate_wiener
from .reduction import (
    DEIMOperator,
    PODBasis,
    PSDBasis,
    ReducedHamiltonian,
    ReducedSDE,
    SnapshotMatrix,
    assemble_snapshots,
    build_deim,
    build_pod,
    build_psd_cotangent_lift,
    energy_drift_terms,
    pod_deim_system,
    reduce_hamiltonian_psd,
    reduce_sde_pod,
    sdeim_system,
    symplectic_inverse,
    symplecticity_defect,
    truncated_svd,
)
from .systems import (
    HamiltonianSDESystem,
    NonConvergence,
    SDESystem,
    SolverSettings,
    Trajectory,
    canonical_j,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DEIMOperator",
    "EnsembleResult",
    "HamiltonianSDESystem",
    "KuboConfig",
    "METHODS",
    "NLSConfig",
    "NonConvergence",
    "PODBasis",
    "PSDBasis",
    "ReducedHamiltonian",
    "ReducedSDE",
    "RngSpec",
    "RunConfig",
    "SDESystem",
    "SnapshotMatrix",
    "SolverSettings",
    "StackedHamiltonian",
    "StackedSDE",
    "TimeGrid",
    "Trajectory",
    "WienerPath",
    "assemble_snapshots",
    "build_config",
    "build_deim",
    "build_nls_system",
    "build_pod",
    "build_psd_cotangent_lift",
    "canonical_j",
    "coarsen_wiener",
    "config_hash",
    "energy_drift_terms",
    "energy_trace",
    "error_metrics",
    "generate_wiener",
    "integrate",
    "jacobian_symplecticity_defect",
    "kubo_exact",
    "kubo_exact_ensemble",
    "kubo_exact_mean",
    "kubo_system",
    "load_config",
    "make_stepper",
    "pod_deim_system",
    "pod_reduced_stacked",
    "poisson_bracket",
    "psd_reduced_stacked",
    "reduce_hamiltonian_psd",
    "reduce_sde_pod",
    "run_ensemble",
    "sdeim_system",
    "snapshots_from_ensemble",
    "soliton_initial_state",
    "soliton_modulus",
    "stack_hamiltonian",
    "stack_sde",
    "symplectic_inverse",
    "symplecticity_defect",
    "truncated_svd",
    "__version__",
]
