"""Boundary port-Hamiltonian structures for 1D linear systems: exact polynomial
matrix algebra, Stokes-Dirac and Stokes-Lagrange boundary operators, and a
structure-aware finite-difference simulator."""

__version__ = "0.1.0"
