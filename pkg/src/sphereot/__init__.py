"""Sliced optimal transport on the hypersphere.

Spherical sliced-Wasserstein distances with data-adaptive direction
weights, circular optimal transport solvers, and particle flows on S^{d-1}.
"""

from .circular import (CircularEmpirical, brute_force_circ_w, circ_w1_level_median,
                       circ_w2_vs_uniform, circ_w_binary_search)
from .estimators import SphericalGradientFlow, SphericalSlicedDistance
from .exceptions import (ConfigError, DegenerateProjection, NumericalError, SphereOTError)
from .flows import (FlowConfig, FlowState, exact_sphere_w2, flow_step, gla_step, nll,
                    preset_config, run_flow)
from .sliced import (DistanceReport, SlicedConfig, dssw_gradient, dssw_hat, ssw_hat,
                     sw_hat)
from .sphere import (VmfComponent, VmfMixture, circle_coordinate, geodesic_project,
                     icosahedron_mixture, mixture_log_density, sample_uniform_sphere,
                     sample_vmf)
from .stiefel import FrameBatch, sample_frames
from .weighting import (EnergySpec, NetworkParams, ProjectionWeighter, grad_check,
                        init_network, network_forward, nonparametric_weights,
                        parametric_weights, train_network)

__version__ = "0.1.0"

__all__ = [
    "CircularEmpirical", "brute_force_circ_w", "circ_w1_level_median", "circ_w2_vs_uniform",
    "circ_w_binary_search", "SphericalGradientFlow", "SphericalSlicedDistance",
    "ConfigError", "DegenerateProjection", "NumericalError", "SphereOTError", "FlowConfig",
    "FlowState", "exact_sphere_w2", "flow_step", "gla_step", "nll", "preset_config",
    "run_flow", "DistanceReport", "SlicedConfig", "dssw_gradient", "dssw_hat", "ssw_hat",
    "sw_hat", "VmfComponent", "VmfMixture", "circle_coordinate", "geodesic_project",
    "icosahedron_mixture", "mixture_log_density", "sample_uniform_sphere", "sample_vmf",
    "FrameBatch", "sample_frames", "EnergySpec", "NetworkParams", "ProjectionWeighter",
    "grad_check", "init_network", "network_forward", "nonparametric_weights",
    "parametric_weights", "train_network",
]
