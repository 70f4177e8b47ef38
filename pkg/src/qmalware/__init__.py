"""Statevector simulation toolkit for quantum-kernel and variational
malware classifiers."""

__version__ = "0.1.0"
