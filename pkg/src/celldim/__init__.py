"""Dimensioning toolkit for irregular cellular networks.

Simulates Poisson station deployments, solves the coupled cell-load
fixed point, averages per-cell performance into mean-cell curves,
verifies the exact dilation invariance of those curves, and sizes the
minimal frequency bandwidth for a mean user-throughput target.
"""

from .experiments import (emit_outputs, min_bandwidth_for_target, run_composite,
                          run_dimension, run_scale_check, run_sweep,
                          sweep_realizations)
from .geometry import (CellPartition, Deployment, EvalGrid, Window, assign_cells,
                       interior_cells, place_deterministic, sample_ppp)
from .performance import (CellMetrics, LoadSolution, MeanCell, MeanCellConfig,
                          PreparedNetwork,
                          SolverConfig, TrafficModel, cell_metrics, cell_traffic,
                          critical_traffic, mean_cell_analytic,
                          mean_cell_from_cells, network_average, prepare_network,
                          solve_loads)
from .propagation import (AntennaConfig, CostHataZone, LinkParams, PathLossParams,
                          PropagationModel, ShadowingConfig, antenna_gain,
                          noise_power_dbm, params_from_cost_hata, path_loss,
                          propagation_loss, scale_k_to_frequency, shadow_sample)
from .radio import (InterferenceFactors, RateModel, ergodic_bits_per_symbol,
                    exp_e1_scaled, peak_rate, sinr, sinr_from_gains)
from .scaling import (CompositeResult, NetworkBundle, ScalingReport,
                      ScalingTransform, ZoneCurve, ZoneSpec, build_composite,
                      kd_spread, qos_homogeneity, rescale, verify_scaling)
from .scenario import ConfigError, Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AntennaConfig", "CellMetrics", "CellPartition", "CompositeResult",
    "ConfigError", "CostHataZone",
    "Deployment", "EvalGrid", "InterferenceFactors", "LinkParams",
    "LoadSolution", "MeanCell", "MeanCellConfig", "NetworkBundle",
    "PathLossParams", "PreparedNetwork", "PropagationModel", "RateModel",
    "ScalingReport", "ScalingTransform", "Scenario", "ShadowingConfig",
    "SolverConfig", "TrafficModel", "Window", "ZoneCurve", "ZoneSpec",
    "antenna_gain",
    "assign_cells", "build_composite", "cell_metrics", "cell_traffic",
    "critical_traffic", "emit_outputs", "ergodic_bits_per_symbol",
    "exp_e1_scaled", "interior_cells", "kd_spread", "load_scenario",
    "mean_cell_analytic", "mean_cell_from_cells", "min_bandwidth_for_target",
    "network_average", "noise_power_dbm", "params_from_cost_hata", "path_loss",
    "peak_rate", "place_deterministic", "prepare_network", "propagation_loss",
    "qos_homogeneity", "rescale", "run_composite", "run_dimension",
    "run_scale_check", "run_sweep", "sample_ppp", "scale_k_to_frequency",
    "shadow_sample", "sinr", "sinr_from_gains", "solve_loads",
    "sweep_realizations", "verify_scaling", "__version__",
]
