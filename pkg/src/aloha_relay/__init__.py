"""Aloha multihop relaying on Poisson routes: SINR calculus, analytic delays and speeds,
a Monte Carlo oracle and a CSV-producing command line."""

from .analytic import (
    InterfererSpec,
    LatticeRouteConfig,
    PoissonRouteConfig,
    ShapeConstants,
    capture_nn,
    capture_nn_noise,
    capture_nr,
    critical_p,
    density_argmax,
    density_of_progress,
    end_to_end_delay,
    end_to_end_delay_noise,
    end_to_end_speed,
    lattice_mean_local_delay,
    lattice_speed,
    long_distance_speed,
    mean_local_delay_nn,
    mean_local_delay_noise_flag,
    shape_constants,
)
from .sinr import ChannelConfig, MacConfig

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "MacConfig",
    "InterfererSpec",
    "LatticeRouteConfig",
    "PoissonRouteConfig",
    "ShapeConstants",
    "shape_constants",
    "capture_nn",
    "capture_nr",
    "capture_nn_noise",
    "critical_p",
    "mean_local_delay_nn",
    "mean_local_delay_noise_flag",
    "long_distance_speed",
    "density_of_progress",
    "density_argmax",
    "end_to_end_delay",
    "end_to_end_delay_noise",
    "end_to_end_speed",
    "lattice_mean_local_delay",
    "lattice_speed",
]
