"""Decentralized coordination of connected automated vehicles at conflict
points, with a fixed-step simulator and a human-driver baseline."""

from .trajectory import CubicTrajectory, Limits, coefficients, exit_time_bounds

__all__ = ["CubicTrajectory", "Limits", "coefficients", "exit_time_bounds"]
__version__ = "0.1.0"
