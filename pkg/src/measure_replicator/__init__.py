"""Measure-valued replicator-mutator dynamics on finite strategy spaces."""

from ._validation import NumericalError, ValidationError
from .analysis import (
    ContinuationResult,
    CSSReport,
    EquilibriumResult,
    NewtonDivergence,
    PermanenceReport,
    analytic_spectrum_pure_selection,
    continuation,
    css_diagnostic,
    find_equilibrium,
    is_ess,
    permanence_check,
    persistence_condition,
    persistence_margin,
    relative_fitness,
)
from .dynamics import (
    MutationKernel,
    Trajectory,
    integrate_ode,
    mass_rate,
    steady_state_residual,
    vector_field,
)
from .measures import (
    AtomicMeasure,
    flat_distance,
    integrate,
    linear_combine,
    pushforward,
    restrict,
    total_mass,
)
from .partitions import (
    Partition,
    approximate,
    make_partition,
    mod_limit,
    project,
    quotient_map,
    refine_sequence,
    refines,
)
from .space import StrategySpace, build_finite, build_grid
from .vitals import (
    FitnessReport,
    VitalRates,
    carrying_capacity,
    check_assumptions,
    fitness_report,
    reproductive_number,
)

__version__ = "0.1.0"
