"""Mixed-traffic simulation and frequency-domain stability analysis for CAV pairs.

Submodules:

* :mod:`cavpair.models` - parameter sets, nonlinear policies, equilibria
* :mod:`cavpair.simulation` - delayed nonlinear packet and fleet simulation
* :mod:`cavpair.linear` - linearization, transfer functions, stability tests
* :mod:`cavpair.charts` - stability boundaries, gain charts, penetration curves
* :mod:`cavpair.metrics` - amplification ratios and seed ensembles
* :mod:`cavpair.cli` - command-line front end
"""
from .models import (
    CavParams, Equilibrium, EquilibriumError, HvParams, LinearizationError, VehicleLimits,
    cav_control, compute_equilibrium, hv_control, range_gradient, range_policy_cav,
    range_policy_hv, saturate, speed_policy_w,
)
from .linear import (
    CombinedParams, FrequencyResponse, LinearizedPacket, PoleError, combine_params,
    frequency_response, head_to_tail_tf, hv_chain, link_tf, linearize, p_of_omega,
    plant_stability_test, string_stability_margin,
)
from .simulation import (
    FleetScenario, IntegrationError, LeadProfile, PacketScenario, PairingAssignment, Trajectory,
    allocate_cavs, canonical_lead, evaluate_lead, pair_cavs, reverse_guard, simulate_fleet,
    simulate_packet,
)
from .charts import (
    BoundaryCurve, ChartGrid, ChartSpec, PenetrationCurve, build_chart, classify_point,
    hopf_boundary, max_kappa, penetration_curve, robust_gain_region, string_boundary_family,
    string_boundary_zero,
)
from .metrics import FleetMetrics, fleet_metrics, gamma, seed_ensemble

__version__ = "0.1.0"

__all__ = [
    "CavParams", "Equilibrium", "EquilibriumError", "HvParams", "LinearizationError",
    "VehicleLimits", "cav_control", "compute_equilibrium", "hv_control", "range_gradient",
    "range_policy_cav", "range_policy_hv", "saturate", "speed_policy_w", "CombinedParams",
    "FrequencyResponse", "LinearizedPacket", "PoleError", "combine_params",
    "frequency_response", "head_to_tail_tf", "hv_chain", "link_tf", "linearize", "p_of_omega",
    "plant_stability_test", "string_stability_margin", "FleetScenario", "IntegrationError",
    "LeadProfile", "PacketScenario", "PairingAssignment", "Trajectory", "allocate_cavs",
    "canonical_lead", "evaluate_lead", "pair_cavs", "reverse_guard", "simulate_fleet",
    "simulate_packet", "BoundaryCurve", "ChartGrid", "ChartSpec", "PenetrationCurve",
    "build_chart", "classify_point", "hopf_boundary", "max_kappa", "penetration_curve",
    "robust_gain_region", "string_boundary_family", "string_boundary_zero", "FleetMetrics",
    "fleet_metrics", "gamma", "seed_ensemble",
]
