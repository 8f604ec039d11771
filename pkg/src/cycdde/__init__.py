"""Cyclic compartmental models with distributed delays: simulation, reduction to
scalar distributed DDEs, equilibria and characteristic-equation stability."""

__version__ = "0.1.0"
