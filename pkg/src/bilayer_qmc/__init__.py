"""Quantum Monte Carlo for the Ising-Heisenberg bilayer."""

from .lattice import Boundary, BondKind, LatticeSpec, build_lattice, fourier_correlations, momentum_grid
from .sse import Couplings, SseConfig

__all__ = [
    "Boundary",
    "BondKind",
    "Couplings",
    "LatticeSpec",
    "SseConfig",
    "build_lattice",
    "fourier_correlations",
    "momentum_grid",
]
__version__ = "0.1.0"
