"""Pseudo-H-infinity synthesis and Lagrange stabilization of pendulum-like systems."""

__version__ = "0.1.0"
