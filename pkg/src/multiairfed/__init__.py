"""Hierarchical over-the-air federated learning in clustered wireless networks.

Modules
-------
geometry     clustered network sampling (parent process with device rings)
radio        channel draws, truncated channel inversion, payload normalization
analysis     closed-form interference and distortion, with Monte Carlo oracles
ota          signal-level uplink/downlink simulation and aggregate estimation
learning     MultiAirFed and HierFed training on a synthetic task
config       ``key = value`` experiment configuration
experiments  validation suite, sweeps and training orchestration
"""

from .analysis import (DistortionBreakdown, DivergenceError, NoActiveDevicesError,
                       compute_beta, compute_psi, distortion_objective, min_distortion_inter,
                       min_distortion_intra, optimal_theta_inter, optimal_theta_intra,
                       psi_monte_carlo)
from .config import ConfigError, ExperimentConfig, parse_config
from .geometry import InsufficientDensityError, NetworkTopology, build_topology
from .learning import (LearningSchedule, TrainResult, make_synthetic_federation,
                       run_hierfed, run_multiairfed)
from .ota import Scenario, empirical_mse
from .radio import (DegeneratePayloadError, ParameterError, RadioConfig, compute_rho,
                    exp_integral, normalize_payload)

__all__ = [
    "ConfigError", "DegeneratePayloadError", "DistortionBreakdown", "DivergenceError",
    "ExperimentConfig", "InsufficientDensityError", "LearningSchedule", "NetworkTopology",
    "NoActiveDevicesError", "ParameterError", "RadioConfig", "Scenario", "TrainResult",
    "build_topology", "compute_beta", "compute_psi", "compute_rho", "distortion_objective",
    "empirical_mse", "exp_integral", "make_synthetic_federation", "min_distortion_inter",
    "min_distortion_intra", "normalize_payload", "optimal_theta_inter", "optimal_theta_intra",
    "parse_config", "psi_monte_carlo", "run_hierfed", "run_multiairfed",
]
