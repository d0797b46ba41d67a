"""Relativistic Thomas-Fermi energy asymptotics: solvers, spectra and checks."""

__version__ = "0.1.0"
