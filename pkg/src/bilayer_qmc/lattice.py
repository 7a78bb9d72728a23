"""Bilayer square-lattice geometry.

Spins are indexed globally as ``layer * L**2 + y * L + x`` with layer 0 = A
(upper) and layer 1 = B (lower).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Boundary(str, Enum):
    PERIODIC = "periodic"
    OPEN = "open"


class BondKind(int, Enum):
    INTRA_A = 0
    INTRA_B = 1
    INTER = 2


@dataclass(frozen=True)
class Bond:
    kind: BondKind
    site1: int
    site2: int


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    boundary: Boundary
    bonds: tuple[Bond, ...] = field(repr=False)

    @property
    def n_sites_per_layer(self) -> int:
        return self.L * self.L

    @property
    def n_spins(self) -> int:
        return 2 * self.L * self.L

    @property
    def N_H(self) -> int:
        return sum(1 for b in self.bonds if b.kind is BondKind.INTER)

    @property
    def N_I(self) -> int:
        """Intra-layer bonds in *one* layer."""
        return sum(1 for b in self.bonds if b.kind is BondKind.INTRA_A)

    def bond_array(self) -> np.ndarray:
        """``(n_bonds, 2)`` int64 array of global site pairs."""
        return np.array([(b.site1, b.site2) for b in self.bonds], dtype=np.int64).reshape(-1, 2)

    def kind_array(self) -> np.ndarray:
        return np.array([int(b.kind) for b in self.bonds], dtype=np.int64)

    def coords(self) -> np.ndarray:
        """``(L**2, 2)`` array of (x, y) for the sites of one layer."""
        idx = np.arange(self.n_sites_per_layer)
        return np.stack([idx % self.L, idx // self.L], axis=1)


def site_index(layer: int, x: int, y: int, L: int) -> int:
    return layer * L * L + y * L + x


def build_lattice(L: int, boundary: Boundary | str = Boundary.PERIODIC) -> LatticeSpec:
    boundary = Boundary(boundary)
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if boundary is Boundary.PERIODIC and L < 3:
        raise ValueError(f"periodic boundaries need L >= 3 (got L={L}); use open boundaries")

    periodic = boundary is Boundary.PERIODIC
    bonds: list[Bond] = []
    for layer, kind in ((0, BondKind.INTRA_A), (1, BondKind.INTRA_B)):
        # x-bonds, row-major
        for y in range(L):
            for x in range(L):
                if x + 1 < L or periodic:
                    bonds.append(Bond(kind, site_index(layer, x, y, L), site_index(layer, (x + 1) % L, y, L)))
        # y-bonds, row-major
        for y in range(L):
            for x in range(L):
                if y + 1 < L or periodic:
                    bonds.append(Bond(kind, site_index(layer, x, y, L), site_index(layer, x, (y + 1) % L, L)))
    for i in range(L * L):
        bonds.append(Bond(BondKind.INTER, i, i + L * L))
    return LatticeSpec(L=L, boundary=boundary, bonds=tuple(bonds))


def momentum_grid(L: int) -> np.ndarray:
    """``(L**2, 2)`` array of k = (2 pi / L)(m, n), ordered with m fastest."""
    m, n = np.meshgrid(np.arange(L), np.arange(L), indexing="xy")
    return 2.0 * np.pi / L * np.stack([m.ravel(), n.ravel()], axis=1)


def fourier_correlations(C: np.ndarray, L: int) -> np.ndarray:
    """C(k) = sum_r exp(-i k.r) C(r) on the full momentum grid.

    ``C`` is indexed ``C[y, x]`` by displacement; the result is indexed
    ``Ck[n, m]`` for k = (2 pi / L)(m, n).
    """
    C = np.asarray(C)
    if C.shape != (L, L):
        raise ValueError(f"expected a {L}x{L} displacement table, got shape {C.shape}")
    return np.fft.fft2(C)


def inverse_fourier_correlations(Ck: np.ndarray, L: int) -> np.ndarray:
    Ck = np.asarray(Ck)
    if Ck.shape != (L, L):
        raise ValueError(f"expected a {L}x{L} momentum table, got shape {Ck.shape}")
    return np.fft.ifft2(Ck)
