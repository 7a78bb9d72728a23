"""Replica manifold for Tr(rho_A^n) and entanglement-Hamiltonian correlators.

Each replica is one block of a multi-block :class:`~bilayer_qmc.sse.SseConfig`
at the physical inverse temperature. Layer A world-lines continue from the
end of replica k into replica k+1 (cyclically); every replica keeps its own
time-periodic copy of layer B. Replica seams are the integer EH times tau.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numba import njit

from .estimators import MIN_BINS
from .lattice import LatticeSpec
from .sse import Couplings, SseConfig, _mc_sweep, _propagate, adjust_cutoff, mc_sweep

DEFAULT_N_REP = 4


class ReplicaManifold(SseConfig):
    @property
    def n_rep(self) -> int:
        return self.n_blocks

    def seam_states(self) -> np.ndarray:
        """``(n_rep, L**2)`` layer-A spins (+-1) at the start of each replica."""
        L2 = self.lattice.n_sites_per_layer
        return _propagate(self.ops, self.state, self.bond_sites)[: self.n_blocks, :L2].copy()


def build_manifold(lat: LatticeSpec, couplings: Couplings, beta: float, n_rep: int = DEFAULT_N_REP,
                   seed: int | None = None, rng: np.random.Generator | None = None) -> ReplicaManifold:
    if n_rep < 2:
        raise ValueError(f"replica manifold needs n_rep >= 2, got {n_rep}")
    return ReplicaManifold(lat, couplings, beta, n_blocks=n_rep, seed=seed, rng=rng)


def check_manifold(man: ReplicaManifold) -> None:
    """Glue-topology checks on top of the ordinary SSE invariants."""
    from .sse import check_invariants

    check_invariants(man)
    L2 = man.lattice.n_sites_per_layer
    seams = _propagate(man.ops, man.state, man.bond_sites)
    for k in range(man.n_rep):
        b_slice = slice(L2 + k * L2, L2 + (k + 1) * L2)
        start = seams[k]
        end = seams[k + 1]
        assert np.array_equal(end[b_slice], start[b_slice]), f"B copy of replica {k} is not time-periodic"
        nxt = seams[(k + 1) % man.n_rep]
        assert np.array_equal(end[:L2], nxt[:L2]), f"A seam between replicas {k} and {k + 1} is broken"


# ---------------------------------------------------------------------------
# compiled accumulation


@njit(cache=True)
def _accumulate_seams(ops, state, bond_sites, L, onsite, corr):
    """Add one configuration's seam products.

    ``onsite[i, tau]`` += (1/n) sum_k s_i(k + tau) s_i(k);
    ``corr[tau, dy, dx]`` += (1/n) sum_k sum_j s_{j+d}(k + tau) s_j(k).
    """
    n = ops.shape[0]
    L2 = L * L
    seams = _propagate(ops, state, bond_sites)
    for tau in range(n):
        for k in range(n):
            a = seams[(k + tau) % n]
            b = seams[k]
            for i in range(L2):
                onsite[i, tau] += a[i] * b[i] / n
            for dy in range(L):
                for dx in range(L):
                    t = 0
                    for y in range(L):
                        for x in range(L):
                            j = y * L + x
                            jd = ((y + dy) % L) * L + (x + dx) % L
                            t += a[jd] * b[j]
                    corr[tau, dy, dx] += t / n


@njit(cache=True)
def _sample_manifold(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total,
                     link, first, last, flip, stack, rng, L, n_bins, bin_size, onsite_bins, corr_bins):
    for b in range(n_bins):
        for _ in range(bin_size):
            _mc_sweep(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total,
                      link, first, last, flip, stack, rng)
            _accumulate_seams(ops, state, bond_sites, L, onsite_bins[b], corr_bins[b])
        onsite_bins[b] /= bin_size
        corr_bins[b] /= bin_size


@dataclass
class EhCorrelator:
    L: int
    n_rep: int
    onsite_bins: np.ndarray  # (bins, L**2, n_rep)
    Gk_bins: np.ndarray  # (bins, n_rep, L, L), indexed [.., tau, k_n, k_m]

    @property
    def n_bins(self) -> int:
        return self.onsite_bins.shape[0]

    @staticmethod
    def _mean_err(bins):
        k = bins.shape[0]
        mean = bins.mean(axis=0)
        err = bins.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.full(mean.shape, np.nan)
        return mean, err

    def onsite(self):
        """Mean and error of G_i(tau), shape ``(L**2, n_rep)``."""
        return self._mean_err(self.onsite_bins)

    def momentum(self):
        """Mean and error of G(k, tau), shape ``(n_rep, L, L)``."""
        return self._mean_err(self.Gk_bins)

    def tau_drift(self):
        """Mean and error of G(k, tau) - G(k, 0) computed bin by bin."""
        return self._mean_err(self.Gk_bins - self.Gk_bins[:, :1])

    @property
    def reliable(self) -> bool:
        return self.n_bins >= MIN_BINS


def sample_manifold(man: ReplicaManifold, n_bins: int, bin_size: int) -> EhCorrelator:
    L = man.lattice.L
    n = man.n_rep
    onsite = np.zeros((n_bins, L * L, n))
    corr = np.zeros((n_bins, n, L, L))
    _sample_manifold(*man.kernel_args(), L, n_bins, bin_size, onsite, corr)
    Gk = np.fft.fft2(corr, axes=(-2, -1)).real / L ** 4
    return EhCorrelator(L, n, onsite, Gk)


def measure_G_onsite(man: ReplicaManifold) -> np.ndarray:
    """G_i(tau) for the current configuration, shape ``(L**2, n_rep)``."""
    seams = man.seam_states().astype(float)
    n = man.n_rep
    return np.stack([np.mean(np.roll(seams, -tau, axis=0) * seams, axis=0) for tau in range(n)], axis=1)


def measure_G_momentum(man: ReplicaManifold) -> np.ndarray:
    """G(k, tau) = <s~_k(tau) s~_-k(0)> for the current configuration, shape ``(n_rep, L, L)``."""
    L = man.lattice.L
    seams = man.seam_states().astype(float).reshape(man.n_rep, L, L)
    sk = np.fft.fft2(seams, axes=(-2, -1)) / L ** 2
    return np.stack([np.mean(np.roll(sk, -tau, axis=0) * np.conj(sk), axis=0).real
                     for tau in range(man.n_rep)])


def run_manifold(man: ReplicaManifold, n_equil: int, n_bins: int, bin_size: int) -> EhCorrelator:
    for _ in range(n_equil):
        mc_sweep(man)
        adjust_cutoff(man)
    return sample_manifold(man, n_bins, bin_size)


GK_FIELDS = ("L", "g", "beta", "n_rep", "k_m", "k_n", "tau", "G", "error")
ONSITE_FIELDS = ("L", "g", "beta", "n_rep", "site", "tau", "G", "error")


def momentum_csv(corr: EhCorrelator, g: float, beta: float) -> str:
    mean, err = corr.momentum()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GK_FIELDS)
    L = corr.L
    for kn in range(L):
        for km in range(L):
            for tau in range(corr.n_rep):
                w.writerow([L, repr(g), repr(beta), corr.n_rep, km, kn, tau,
                            repr(float(mean[tau, kn, km])), repr(float(err[tau, kn, km]))])
    return buf.getvalue()


def onsite_csv(corr: EhCorrelator, g: float, beta: float) -> str:
    mean, err = corr.onsite()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ONSITE_FIELDS)
    for i in range(corr.L ** 2):
        for tau in range(corr.n_rep):
            w.writerow([corr.L, repr(g), repr(beta), corr.n_rep, i, tau,
                        repr(float(mean[i, tau])), repr(float(err[i, tau]))])
    return buf.getvalue()
