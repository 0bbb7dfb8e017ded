"""Random-conductance-model laboratory.

Exact finite-state numerics and reproducible Monte Carlo for nearest-neighbour
random walks on Z^d whose edge weights are drawn i.i.d. from an atomic law on
(0, 1].  The package covers environment sampling, percolation-style cluster
geometry, walk simulation with coarse-graining over strong clusters, exact
kernel/Green-function machinery, entropy-method certificates, and the
experiment drivers exposed by the ``rcmlab`` command line tool.
"""

__version__ = "0.1.0"

from .lattice import Box, LatticeSpec, annulus_bounds, annulus_index_of, annulus_members, annulus_size, diffusive_time
from .law import ConductanceLaw, family_exponent, family_law, load_law, trap_scale_mass, directed_trap_mass
from .field import ConductanceField, PatchedField, box_field, lazy_field
from .traps import (
    TrapCensus,
    TrapRecord,
    directed_trap_indicator,
    is_trap_edge,
    trap_census,
    trap_patches,
)
from .cluster import ClusterDecomposition, HoleReport, decompose, hole_report
from .chains import (
    FiniteChain,
    KernelVector,
    annulus_lower_bound,
    build_chain,
    ct_heat_kernel,
    diagonal_decay_profile,
    heat_kernel,
)
from .greens import (
    GreensOperator,
    fk_quadform,
    greens,
    greens_comparison_check,
    greens_identity_check,
    quad_form,
)
from .nash import (
    NashBundle,
    derived_constants,
    heat_constants,
    monotonicity_probe,
    nash_bundle,
    nash_derivative_check,
    nash_variance_check,
    poincare_ratio,
    poincare_suite,
    poisson_window_weights,
)
from .walk import (
    estimate_beta,
    expected_hiding_time,
    sample_rnk,
    simulate_return,
    terminal_positions,
    walk_path,
)
from .config import ExperimentConfig, window_annuli, window_contains
from .experiments import (
    RunResult,
    annulus_profile,
    anomaly_experiment,
    moment_experiment,
    validate_suite,
)


def vertex_weight(field, x) -> float:
    """Total conductance at x (the walk's normalisation at that vertex)."""
    return field.vertex_weight(x)


__all__ = [
    "Box",
    "LatticeSpec",
    "ConductanceLaw",
    "ConductanceField",
    "PatchedField",
    "TrapCensus",
    "TrapRecord",
    "ClusterDecomposition",
    "HoleReport",
    "FiniteChain",
    "KernelVector",
    "GreensOperator",
    "NashBundle",
    "ExperimentConfig",
    "RunResult",
    "annulus_bounds",
    "annulus_index_of",
    "annulus_lower_bound",
    "annulus_members",
    "annulus_profile",
    "annulus_size",
    "anomaly_experiment",
    "box_field",
    "build_chain",
    "ct_heat_kernel",
    "decompose",
    "derived_constants",
    "diagonal_decay_profile",
    "diffusive_time",
    "directed_trap_indicator",
    "directed_trap_mass",
    "estimate_beta",
    "expected_hiding_time",
    "family_exponent",
    "family_law",
    "fk_quadform",
    "greens",
    "greens_comparison_check",
    "greens_identity_check",
    "heat_constants",
    "heat_kernel",
    "hole_report",
    "is_trap_edge",
    "lazy_field",
    "load_law",
    "moment_experiment",
    "monotonicity_probe",
    "nash_bundle",
    "nash_derivative_check",
    "nash_variance_check",
    "poincare_ratio",
    "poincare_suite",
    "poisson_window_weights",
    "quad_form",
    "sample_rnk",
    "simulate_return",
    "terminal_positions",
    "trap_census",
    "trap_patches",
    "trap_scale_mass",
    "validate_suite",
    "vertex_weight",
    "walk_path",
    "window_annuli",
    "window_contains",
    "__version__",
]
