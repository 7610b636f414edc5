"""Thermodynamic formalism for the Henon map at the first bifurcation."""

__version__ = "0.1.0"
SCHEMA_VERSION = "1.0"
