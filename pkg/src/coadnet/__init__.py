"""Simulation and analysis of networks of coupled Lie-Poisson systems on so(3)."""

__version__ = "0.1.0"
