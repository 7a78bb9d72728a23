"""Dense exact diagonalization for small bilayers.

Basis states are integers whose bit ``s`` is 1 when global spin ``s`` points
up. Layer A occupies the low ``L**2`` bits, so a basis index factorizes as
``a + 2**(L**2) * b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimators import ScalarSet, binder, susceptibility
from .lattice import BondKind, LatticeSpec, fourier_correlations
from .sse import Couplings

MAX_SPINS = 14


def _sz_table(n_spins: int) -> np.ndarray:
    """``(2**n, n)`` table of S^z = +-1/2 for each basis state and spin."""
    idx = np.arange(2 ** n_spins)[:, None]
    return ((idx >> np.arange(n_spins)) & 1) - 0.5


def build_hamiltonian(lat: LatticeSpec, couplings: Couplings, h: float = 0.0) -> np.ndarray:
    """H = -J sum S^z S^z (intra) + J' sum S_A . S_B - h sum_{i in A} S^x_i."""
    n = lat.n_spins
    if n > MAX_SPINS:
        raise ValueError(f"{n} spins exceeds the dense limit of {MAX_SPINS}")
    dim = 2 ** n
    sz = _sz_table(n)
    H = np.zeros((dim, dim))
    diag = np.zeros(dim)
    states = np.arange(dim)
    for bond in lat.bonds:
        i, j = bond.site1, bond.site2
        if bond.kind is BondKind.INTER:
            diag += couplings.Jp * sz[:, i] * sz[:, j]
            # (J'/2)(S+S- + S-S+) connects antiparallel pairs
            anti = sz[:, i] != sz[:, j]
            flipped = states ^ ((1 << i) | (1 << j))
            H[flipped[anti], states[anti]] += couplings.Jp / 2
        else:
            diag -= couplings.J * sz[:, i] * sz[:, j]
    H[states, states] += diag
    if h:
        for i in range(lat.n_sites_per_layer):
            H[states ^ (1 << i), states] += -h / 2
    return H


def thermal_rho(H: np.ndarray, beta: float) -> np.ndarray:
    """Normalized exp(-beta H) via the eigenbasis."""
    E, V = np.linalg.eigh(H)
    w = np.exp(-beta * (E - E[0]))
    w /= w.sum()
    return (V * w) @ V.T


def reduce_to_A(rho: np.ndarray, lat: LatticeSpec) -> np.ndarray:
    dA = 2 ** lat.n_sites_per_layer
    dB = rho.shape[0] // dA
    return np.einsum("iaib->ab", rho.reshape(dB, dA, dB, dA))


@dataclass
class EhReport:
    eigenvalues: np.ndarray
    eh_levels: np.ndarray
    diagonality_defect: float
    entropy: float
    n: int
    G_onsite: np.ndarray  # (L**2, n)
    G_momentum: np.ndarray  # (n, L, L) complex, indexed [tau, k_n, k_m]
    meta: dict = field(default_factory=dict)

    def to_json(self, max_levels: int = 64) -> dict:
        return {
            "meta": self.meta,
            "n": self.n,
            "eigenvalues": self.eigenvalues[:max_levels].tolist(),
            "eh_levels": [x if math.isfinite(x) else None for x in self.eh_levels[:max_levels].tolist()],
            "diagonality_defect": self.diagonality_defect,
            "entropy": self.entropy,
            "G_onsite": self.G_onsite.tolist(),
            "G_momentum_real": self.G_momentum.real.tolist(),
            "G_momentum_imag": self.G_momentum.imag.tolist(),
        }


def eh_correlators(rho_A: np.ndarray, L: int, n: int) -> np.ndarray:
    """G_ij(tau) = Tr(rho^(n-tau) s_i rho^tau s_j) / Tr(rho^n), s = 2 S^z.

    Returns an array of shape ``(n, L**2, L**2)``.
    """
    lam, U = np.linalg.eigh(rho_A)
    lam = np.clip(lam, 0.0, None)
    n_sites = L * L
    sig = 2 * _sz_table(n_sites)  # (dA, n_sites)
    # sigma_i in the eigenbasis of rho_A
    S = np.einsum("ua,ui,ub->iab", U, sig, U)
    trn = np.sum(lam ** n)
    out = np.empty((n, n_sites, n_sites))
    for tau in range(n):
        w = np.outer(lam ** (n - tau), lam ** tau)
        out[tau] = np.einsum("ab,iab,jba->ij", w, S, S) / trn
    return out


def eh_report(rho_A: np.ndarray, L: int, n: int = 4) -> EhReport:
    if n < 2:
        raise ValueError("n must be >= 2")
    tr = np.trace(rho_A)
    if not tr > 0:
        raise ValueError("reduced density matrix has zero trace")
    rho_A = rho_A / tr
    lam = np.sort(np.clip(np.linalg.eigvalsh(rho_A), 0.0, None))[::-1]
    with np.errstate(divide="ignore"):
        xi = -np.log(lam)
    nz = lam[lam > 0]
    entropy = float(-np.sum(nz * np.log(nz)))
    off = rho_A - np.diag(np.diag(rho_A))
    defect = float(np.max(np.abs(off))) if off.size > 1 else 0.0

    Gij = eh_correlators(rho_A, L, n)
    onsite = np.stack([np.diag(Gij[t]) for t in range(n)], axis=1)
    coords = np.stack([np.arange(L * L) % L, np.arange(L * L) // L], axis=1)
    Gk = np.empty((n, L, L), dtype=complex)
    for tau in range(n):
        # average over reference sites at fixed displacement, then transform
        C = np.zeros((L, L))
        for i in range(L * L):
            for j in range(L * L):
                dx, dy = (coords[i] - coords[j]) % L
                C[dy, dx] += Gij[tau, i, j]
        Gk[tau] = fourier_correlations(C / L ** 4, L)
    return EhReport(lam, xi, defect, entropy, n, onsite, Gk)


def thermal_observables(H: np.ndarray, beta: float, lat: LatticeSpec,
                        couplings: Couplings | None = None) -> ScalarSet:
    """Exact thermal expectation values of the QMC estimators."""
    E, V = np.linalg.eigh(H)
    w = np.exp(-beta * (E - E[0]))
    w /= w.sum()
    energy = float(np.dot(w, E))
    p = np.einsum("sa,a,sa->s", V, w, V)  # diagonal of rho
    n = lat.n_spins
    L2 = lat.n_sites_per_layer
    sz = _sz_table(n)
    m = (sz[:, :L2] - sz[:, L2:]).sum(axis=1) / n
    m_abs = float(np.dot(p, np.abs(m)))
    m2 = float(np.dot(p, m ** 2))
    m4 = float(np.dot(p, m ** 4))
    # G(r) in layer A averaged over reference sites, displacement mod L
    L = lat.L
    coords = lat.coords()
    G = np.zeros((L, L))
    for i in range(L2):
        for j in range(L2):
            dx, dy = (coords[j] - coords[i]) % L
            G[dy, dx] += np.dot(p, sz[:, i] * sz[:, j])
    G /= L2
    return ScalarSet(
        m_abs=m_abs, m2=m2, m4=m4, U2=binder(m2, m4), chi=susceptibility(m2, m_abs, beta, n),
        E=energy, G=G,
    )


def rho_A_for(lat: LatticeSpec, couplings: Couplings, beta: float, h: float = 0.0) -> np.ndarray:
    return reduce_to_A(thermal_rho(build_hamiltonian(lat, couplings, h), beta), lat)


def report_json(lat: LatticeSpec, couplings: Couplings, beta: float, n: int = 4, h: float = 0.0) -> dict:
    H = build_hamiltonian(lat, couplings, h)
    rep = eh_report(reduce_to_A(thermal_rho(H, beta), lat), lat.L, n)
    rep.meta = {"L": lat.L, "boundary": lat.boundary.value, "J": couplings.J, "g": couplings.g,
                "beta": beta, "h": h}
    out = rep.to_json()
    obs = thermal_observables(H, beta, lat, couplings)
    out["observables"] = {k: v for k, v in asdict(obs).items() if k != "G"}
    out["observables"]["G"] = obs.G.tolist()
    return out
