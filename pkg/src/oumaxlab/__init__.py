"""Simulation and verification lab for OU running maxima."""
__version__ = "0.1.0"
