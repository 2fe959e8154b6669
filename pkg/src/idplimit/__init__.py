"""Invariant-domain-preserving limiting for conservation-law solvers."""

__version__ = "0.1.0"
