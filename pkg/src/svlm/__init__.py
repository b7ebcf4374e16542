"""Simulation and verification toolkit for linear processes with space-varying memory."""

__version__ = "0.1.0"
