"""Event-driven simulator and verification harness for jump Fleming-Viot
processes with intrinsically varying population size."""

from .characteristics import (
    Characteristic,
    CharacteristicError,
    DiagonalLambda,
    Drift,
    Event,
    EventStream,
    PointMassList,
    ProductMeasure,
    TruncationReport,
    ValidationReport,
    carrying_capacity,
    effective_impact,
    rescale_to_unit_capacity,
    sample_event_stream,
    test_functional,
    truncate,
    validate,
)
from .dual import (
    CoalescentState,
    Environment,
    build_environment,
    dust_probability,
    moment_duality_stat,
    trace_coupled,
    trace_quenched,
)
from .forward import ForwardPath, TypeMeasure, forward_step, heterozygosity, simulate_forward
from .lookdown import LookdownPath, LookdownState, mark_levels, quasi_fixation_time, simulate_lookdown, theta
from .popsize import PopPath, apply_event, flow, sandwich_check, simulate_pop, stationary_stats
from .prelimit import IBPath, simulate_ib

__version__ = "0.1.0"
