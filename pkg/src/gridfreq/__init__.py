"""gridfreq: dynamic simulation and small-signal analysis of converter
frequency control compensated by the rate of change of voltage."""

from .casefile import Case, CaseParseError, load_bundled_case, parse_case
from .complex_frequency import (
    AnalyticExampleParams,
    ComplexFrequencySample,
    ParkVector,
    ZeroMagnitudeError,
    analytic_example,
    eta_of,
    omega_of,
    rho_of,
    rotate_frame,
)
from .dae import (
    Event,
    SystemModel,
    SystemState,
    TimeSeries,
    assemble,
    build_system,
    simulate,
    step_trapezoidal,
)
from .machines import coi_frequency, initialize_sm, sm_current_injection, sm_derivatives
from .network import (
    Branch,
    Bus,
    FaultOff,
    FaultOn,
    LoadScale,
    Network,
    PFSolution,
    apply_event,
    build_ybus,
    solve_power_flow,
)
from .smallsignal import (
    LinearModel,
    Mode,
    ObservabilityReport,
    eigensolve,
    geometric_observability,
    identify_frequency_mode,
    k_sweep,
    linearize,
    output_row,
)

__version__ = "0.1.0"
