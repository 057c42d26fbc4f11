"""Simulation and inference for the 1-D stochastic wave equation with
fractional-in-space, white-in-time Gaussian noise."""

__version__ = "0.1.0"
