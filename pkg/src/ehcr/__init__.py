"""Stable throughput and delay of an energy-harvesting cognitive radio MAC."""

from .channel import (
    LinkModel,
    SuccessProbs,
    derive_success_probs,
    fit_link,
    monte_carlo_success_probs,
    success_alone,
    success_interfered,
)
from .presets import PRESETS, Preset, get_preset
from .rates import (
    AccessPolicy,
    DelayReport,
    FeedbackChain,
    PrimaryChainDist,
    ServiceRates,
    Traffic,
    UnstableError,
    conventional_rates,
    delay_s1,
    delay_sf1,
    feedback_chain,
    primary_chain,
    s1_rates,
    s2_rates,
    sf1_secondary_rate,
)
from .sim import NodeState, SimConfig, SimReport, estimate_boundary, run
from .solver import (
    FractionalProgram,
    RegionCurve,
    SolveResult,
    bisect_quasiconcave,
    check_quasiconcavity,
    closed_form_s1_delay_ps0,
    closed_form_s1_ps0,
    closed_form_sf_ps0,
    conventional_region,
    feasibility_s2,
    optimize_s1,
    optimize_s1_delay,
    optimize_sf1,
    optimize_sf_delay,
    s2_region,
    stability_region,
)

__version__ = "0.1.0"
