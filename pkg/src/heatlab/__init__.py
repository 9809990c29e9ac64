"""Null controls for heat equations on growing lattice boxes."""

__version__ = "0.1.0"
