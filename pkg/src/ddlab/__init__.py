"""Bangbang and finite-amplitude dynamical decoupling on finite-dimensional
system/environment spaces: averaged Hamiltonians, limit evolutions, Euler
cycles over Cayley graphs, and numerical verification of the convergence
rate bounds."""

from . import analysis, averages, euler, linalg, model, propagate, pulses, scenarios

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "averages",
    "euler",
    "linalg",
    "model",
    "propagate",
    "pulses",
    "scenarios",
    "__version__",
]
