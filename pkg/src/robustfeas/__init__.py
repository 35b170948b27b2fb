"""Robust feasibility decisions for uncertain polynomial systems and gas networks."""

__version__ = "0.1.0"
