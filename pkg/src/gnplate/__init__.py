"""Deterministic bending-plate simulator with thermal and diffusion transport."""

from .material import (
    MaterialParams,
    ModelType,
    NonFinite,
    NotCoercive,
    TypeMismatch,
    ValidationReport,
    internal_energy_coercivity,
    validate,
    xi_estimate,
    zeta,
)
from .grid import Field, Grid, field_from_function, zero_field
from .resultants import FIELD_NAMES, State, resultants, strain, zero_state
from .dynamics import (
    AssemblyInconsistent,
    EnergyReport,
    OperatorMatrices,
    SolverFailure,
    Sources,
    ZERO_SOURCES,
    assemble,
    dissipation,
    energy,
    make_initial_state,
    mms_verify,
    overdetermined_mode_check,
    resolvent_solve,
    run,
    step,
    thermal_energy,
)
from .decay import (
    DecayAccumulator,
    DecayProfile,
    check_dissipation_curvature_bound,
    envelope_check,
    flux_J,
    measure_E,
    profile_from_history,
    theorem_bound,
)
from .backward import (
    BackwardMatrices,
    assemble_backward,
    backward_uniqueness_check,
    localization_impossibility_check,
    reverse_state,
    roundtrip,
    run_backward,
)

__version__ = "0.1.0"
