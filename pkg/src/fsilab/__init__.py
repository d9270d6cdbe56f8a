"""fsilab: a desk-scale laboratory for a linearized compressible flow coupled
to a clamped beam through a moving-material interface condition.

The package discretizes the coupled system with summation-by-parts
operators, builds the re-topologized weighted inner product under which
the generator is dissipative, and runs the two stability experiments:
numerical-range/dissipativity scans and the pointwise resolvent
criterion sweep for strong stability.
"""

__version__ = "0.1.0"

from .ambient import AmbientField, ambient_preset, r_polynomial, u_star_norm
from .analysis import (
    DissipativityReport,
    EnergyTrace,
    ResolventRecord,
    SolveFailed,
    criterion_decay_ratios,
    dissipativity_scan,
    evolve,
    resolvent_solve,
    resolvent_sweep,
    spectrum_leading,
    w2_trace_bound,
)
from .elliptic import (
    CompatibilityViolated,
    EllipticMaps,
    NeumannData,
    dirichlet_map,
    elliptic_maps,
    neumann_potential,
)
from .generator import (
    GeneratorMatrices,
    NoKernelFound,
    Params,
    apply_generator,
    assemble_generator,
    commutator_check_1d,
    commutator_check_2d,
    h0_restricted_sigma_min,
    kernel_vector,
    numerical_adjoint,
    pressure_stabilization,
)
from .grid import (
    Grid,
    beam_fourth_derivative,
    boundary_tags,
    build_grid,
    clamped_curvature,
    clamped_first_derivative,
    clamped_fourth_matrix,
    divergence,
    gradient,
    integrate_2d,
    integrate_beam,
    stress,
    stress_divergence,
    trace_interface,
    trace_normal_derivative,
)
from .state import State, StateSpace, mean_functional, project_h0, state_space
from .weighted import (
    AmbientTooLarge,
    WeightedMetric,
    build_metric,
    norm_equivalence_bounds,
    standard_gram,
    standard_inner,
    weighted_inner,
    xi_parameter,
)

__all__ = [name for name in dir() if not name.startswith("_")]
