"""Simulation toolkit for period-quadrupling discrete time crystals on a driven spin ladder."""

__version__ = "0.1.0"
