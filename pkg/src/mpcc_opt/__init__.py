"""Trajectory optimization for DAE systems with complementarity constraints."""
__version__ = "0.1.0"
