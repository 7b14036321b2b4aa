"""Numerical toolkit for measurement-induced state transitions in fluxonium readout."""

__version__ = "0.1.0"
