"""Weak-field phase-control simulator and correlation-witness toolkit."""

from .linalg import (
    DensityMatrix,
    SpaceLayout,
    commutator,
    herm_exp,
    kron,
    max_norm,
    partial_trace,
    validate_density,
)
from .models import (
    BlockReport,
    CorrelatedState,
    SystemModel,
    as_state,
    block_report,
    build_h0_commuting,
    build_h0_noncommuting,
    build_witness_state,
    gibbs_state,
    split_correlations,
)
from .pulses import (
    SpectralPulse,
    TimeField,
    build_family,
    gaussian_pulse,
    phase_family,
    scale_weak,
    to_time_domain,
)
from .dynamics import (
    TimeGrid,
    Trajectory,
    exact_propagate,
    first_order_rate_analytic,
    interaction_v,
    perturbative_p,
    second_order_autocorrelation_check,
)
from .witness import (
    PhaseControlReport,
    ProtocolThresholds,
    WitnessVerdict,
    check_nogo_conditions,
    detect_wfpc,
    prep_marginal_preserving,
    prep_projective,
    prep_rotate,
    prep_throw_replace,
    run_witness_protocol,
    rotated_marginal_witness,
)
from .qrf import (
    QrfReport,
    exact_two_time,
    intermediate_wfpc_witness,
    qrf_scan,
    regression_two_time,
)
from .config import Scenario, parse_scenario

__version__ = "0.1.0"
