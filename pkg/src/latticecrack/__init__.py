"""Quasi-static brittle fracture on a triangular spring lattice."""

__version__ = "0.1.0"
