"""Numerical toolkit for noncommutative Calderon-Zygmund constructions.

Matrix-valued step functions on truncated dyadic grids, Cuculescu
projections, the good/bad decomposition, kernel surgeries and discretised
singular integrals, plus seeded experiments measuring the decay and growth
rates predicted by the theory.
"""

__version__ = "0.1.0"
