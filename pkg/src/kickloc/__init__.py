"""Quantum kicked rotator on a qubit register under repeated single-qubit measurements."""

__version__ = "0.1.0"
