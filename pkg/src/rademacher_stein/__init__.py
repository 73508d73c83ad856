"""Discrete Malliavin-Stein calculus on finite Rademacher spaces with exact enumeration oracles."""

__version__ = "0.1.0"
