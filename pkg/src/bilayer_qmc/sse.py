"""Stochastic series expansion for the Ising-Heisenberg bilayer.

Operator encoding in ``ops``: ``-1`` is the identity (null slot), otherwise
``3 * bond + kind`` with kind 0 = Ising diagonal, 1 = Heisenberg diagonal,
2 = Heisenberg off-diagonal. Spins are stored as sigma = 2 S^z = +-1.

A configuration holds ``n_blocks`` operator strings of common length ``M``
that are traversed in order. With one block this is the ordinary
``Tr exp(-beta H)`` expansion. With several blocks the configuration lives on
"virtual" sites: layer-A sites are shared by every block while each block
owns a private copy of layer B. The linked-vertex list is built over the
concatenated strings, so A world-lines run through all blocks cyclically and
each B copy wraps within its own block -- that is the replica manifold for
``Tr rho_A^n``. All kernels below are agnostic to the number of blocks.

Vertex legs are numbered ``4 * slot + leg`` with legs 0, 1 below the operator
(on bond sites 1, 2) and legs 2, 3 above it.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .lattice import Boundary, BondKind, LatticeSpec, build_lattice

ISING_DIAG = 0
HEIS_DIAG = 1
HEIS_OFFDIAG = 2

DEFAULT_M0 = 20


@dataclass(frozen=True)
class Couplings:
    J: float = 1.0
    g: float = 0.0

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if not self.g >= 0:
            raise ValueError(f"g must be non-negative, got {self.g}")

    @property
    def Jp(self) -> float:
        """Inter-layer Heisenberg coupling J' = g J."""
        return self.g * self.J

    @classmethod
    def from_jj(cls, J: float, Jp: float) -> "Couplings":
        return cls(J=J, g=Jp / J)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _diagonal_sweep(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total, rng):
    n_blocks, M = ops.shape
    n_is = ising_bonds.shape[0]
    n_h = heis_bonds.shape[0]
    bw = beta * w_total
    for k in range(n_blocks):
        n = nops[k]
        bs = bond_sites[k]
        for p in range(M):
            op = ops[k, p]
            if op < 0:
                if rng.random() < p_ising:
                    b = ising_bonds[int(rng.random() * n_is)]
                    if state[bs[b, 0]] != state[bs[b, 1]]:
                        continue
                    kind = 0
                else:
                    b = heis_bonds[int(rng.random() * n_h)]
                    if state[bs[b, 0]] == state[bs[b, 1]]:
                        continue
                    kind = 1
                if bw >= M - n or rng.random() * (M - n) < bw:
                    ops[k, p] = 3 * b + kind
                    n += 1
            elif op % 3 == 2:
                b = op // 3
                state[bs[b, 0]] = -state[bs[b, 0]]
                state[bs[b, 1]] = -state[bs[b, 1]]
            else:
                if M - n + 1 >= bw or rng.random() * bw < M - n + 1:
                    ops[k, p] = -1
                    n -= 1
        nops[k] = n


@njit(cache=True)
def _build_vertex_list(ops, bond_sites, link, first, last):
    n_blocks, M = ops.shape
    link[:] = -1
    first[:] = -1
    last[:] = -1
    for k in range(n_blocks):
        bs = bond_sites[k]
        for p in range(M):
            op = ops[k, p]
            if op < 0:
                continue
            b = op // 3
            v0 = 4 * (k * M + p)
            for leg in range(2):
                s = bs[b, leg]
                v = v0 + leg
                vl = last[s]
                if vl >= 0:
                    link[vl] = v
                    link[v] = vl
                else:
                    first[s] = v
                last[s] = v0 + 2 + leg
    for s in range(first.shape[0]):
        f = first[s]
        if f >= 0:
            link[f] = last[s]
            link[last[s]] = f


@njit(cache=True)
def _cluster_sweep(ops, state, link, first, flip, stack, rng):
    n_blocks, M = ops.shape
    P = n_blocks * M
    flat = ops.reshape(P)
    n_legs = 4 * P
    flip[:n_legs] = -1
    for v0 in range(n_legs):
        if flip[v0] >= 0 or flat[v0 >> 2] < 0:
            continue
        f = 1 if rng.random() < 0.5 else 0
        flip[v0] = f
        stack[0] = v0
        top = 1
        while top > 0:
            top -= 1
            v = stack[top]
            w = link[v]
            if flip[w] < 0:
                flip[w] = f
                stack[top] = w
                top += 1
            p = v >> 2
            if flat[p] % 3 == 0:
                for leg in range(4):
                    w = 4 * p + leg
                    if flip[w] < 0:
                        flip[w] = f
                        stack[top] = w
                        top += 1
            else:
                w = v ^ 1
                if flip[w] < 0:
                    flip[w] = f
                    stack[top] = w
                    top += 1
    for p in range(P):
        op = flat[p]
        if op >= 0 and op % 3 != 0 and flip[4 * p] != flip[4 * p + 2]:
            # Heisenberg diag <-> off-diag
            flat[p] = op + 1 if op % 3 == 1 else op - 1
    for s in range(state.shape[0]):
        f = first[s]
        if f < 0:
            if rng.random() < 0.5:
                state[s] = -state[s]
        elif flip[f] == 1:
            state[s] = -state[s]


@njit(cache=True)
def _mc_sweep(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total,
              link, first, last, flip, stack, rng):
    _diagonal_sweep(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total, rng)
    _build_vertex_list(ops, bond_sites, link, first, last)
    _cluster_sweep(ops, state, link, first, flip, stack, rng)


@njit(cache=True)
def _propagate(ops, state, bond_sites):
    """State after traversing every block; also returns seam states."""
    n_blocks, M = ops.shape
    s = state.copy()
    seams = np.empty((n_blocks + 1, state.shape[0]), dtype=state.dtype)
    for k in range(n_blocks):
        seams[k] = s
        bs = bond_sites[k]
        for p in range(M):
            op = ops[k, p]
            if op >= 0 and op % 3 == 2:
                b = op // 3
                s[bs[b, 0]] = -s[bs[b, 0]]
                s[bs[b, 1]] = -s[bs[b, 1]]
    seams[n_blocks] = s
    return seams


# ---------------------------------------------------------------------------
# configuration


class SseConfig:
    """Mutable SSE chain state: spins, operator string(s), cutoff and RNG."""

    def __init__(self, lattice: LatticeSpec, couplings: Couplings, beta: float, *,
                 n_blocks: int = 1, M: int = DEFAULT_M0, rng: np.random.Generator | None = None,
                 seed: int | None = None):
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.lattice = lattice
        self.couplings = couplings
        self.beta = float(beta)
        self.n_blocks = int(n_blocks)
        self.rng = rng if rng is not None else np.random.default_rng(seed)

        L2 = lattice.n_sites_per_layer
        self.n_vsites = L2 + self.n_blocks * L2
        bonds = lattice.bond_array()
        kinds = lattice.kind_array()
        # layer-B sites are remapped to the block's private copy
        self.bond_sites = np.empty((self.n_blocks, len(bonds), 2), dtype=np.int64)
        for k in range(self.n_blocks):
            mapped = bonds.copy()
            is_b = mapped >= L2
            mapped[is_b] += k * L2
            self.bond_sites[k] = mapped
        self.ising_bonds = np.flatnonzero(kinds != int(BondKind.INTER)).astype(np.int64)
        self.heis_bonds = np.flatnonzero(kinds == int(BondKind.INTER)).astype(np.int64)

        N_H, N_I = lattice.N_H, lattice.N_I
        J, Jp = couplings.J, couplings.Jp
        self.w_total = (N_H * Jp + 2 * N_I * J) / 2.0
        if self.w_total <= 0:
            raise ValueError("Hamiltonian has no bond terms (need intra bonds or g > 0)")
        self.p_ising = 2 * N_I * J / (N_H * Jp + 2 * N_I * J)

        self.state = self.rng.choice(np.array([-1, 1], dtype=np.int8), size=self.n_vsites)
        self.ops = np.full((self.n_blocks, M), -1, dtype=np.int64)
        self.nops = np.zeros(self.n_blocks, dtype=np.int64)
        self._alloc_buffers()

    def _alloc_buffers(self):
        n_legs = 4 * self.n_blocks * self.M
        self._link = np.empty(n_legs, dtype=np.int64)
        self._flip = np.empty(n_legs, dtype=np.int8)
        self._stack = np.empty(n_legs, dtype=np.int64)
        self._first = np.empty(self.n_vsites, dtype=np.int64)
        self._last = np.empty(self.n_vsites, dtype=np.int64)

    @property
    def M(self) -> int:
        return self.ops.shape[1]

    @property
    def n(self) -> int:
        return int(self.nops.sum())

    @property
    def n2(self) -> int:
        """Number of off-diagonal operators."""
        live = self.ops[self.ops >= 0]
        return int(np.count_nonzero(live % 3 == HEIS_OFFDIAG))

    def physical_state(self, block: int = 0) -> np.ndarray:
        """Spins (+-1) of the 2 L^2 physical sites at the start of ``block``."""
        seams = _propagate(self.ops, self.state, self.bond_sites)
        L2 = self.lattice.n_sites_per_layer
        s = seams[block]
        return np.concatenate([s[:L2], s[L2 + block * L2: L2 + (block + 1) * L2]])

    def kernel_args(self):
        return (self.ops, self.nops, self.state, self.bond_sites, self.ising_bonds, self.heis_bonds,
                self.beta, self.p_ising, self.w_total, self._link, self._first, self._last,
                self._flip, self._stack, self.rng)

    def copy(self) -> "SseConfig":
        return from_bytes(to_bytes(self), cls=type(self))


@dataclass
class VertexList:
    link: np.ndarray
    first: np.ndarray
    last: np.ndarray

    @property
    def free_sites(self) -> np.ndarray:
        return np.flatnonzero(self.first < 0)


# ---------------------------------------------------------------------------
# public operations


def diagonal_sweep(cfg: SseConfig) -> SseConfig:
    _diagonal_sweep(cfg.ops, cfg.nops, cfg.state, cfg.bond_sites, cfg.ising_bonds, cfg.heis_bonds,
                    cfg.beta, cfg.p_ising, cfg.w_total, cfg.rng)
    return cfg


def build_vertex_list(cfg: SseConfig) -> VertexList:
    link = np.empty(4 * cfg.n_blocks * cfg.M, dtype=np.int64)
    first = np.empty(cfg.n_vsites, dtype=np.int64)
    last = np.empty(cfg.n_vsites, dtype=np.int64)
    _build_vertex_list(cfg.ops, cfg.bond_sites, link, first, last)
    return VertexList(link, first, last)


def cluster_sweep(cfg: SseConfig, vl: VertexList) -> SseConfig:
    n_legs = vl.link.shape[0]
    _cluster_sweep(cfg.ops, cfg.state, vl.link, vl.first, np.empty(n_legs, dtype=np.int8),
                   np.empty(n_legs, dtype=np.int64), cfg.rng)
    return cfg


def adjust_cutoff(cfg: SseConfig) -> SseConfig:
    n_max = int(cfg.nops.max())
    if n_max > 0.75 * cfg.M:
        new_M = math.ceil(4 * n_max / 3) + 10
        pad = np.full((cfg.n_blocks, new_M - cfg.M), -1, dtype=np.int64)
        cfg.ops = np.concatenate([cfg.ops, pad], axis=1)
        cfg._alloc_buffers()
    return cfg


def mc_sweep(cfg: SseConfig) -> SseConfig:
    _mc_sweep(*cfg.kernel_args())
    return cfg


def equilibrate(cfg: SseConfig, n_sweeps: int) -> SseConfig:
    for _ in range(n_sweeps):
        mc_sweep(cfg)
        adjust_cutoff(cfg)
    return cfg


def run(cfg: SseConfig, n_equil: int, n_bins: int, bin_size: int,
        measure: Callable[[SseConfig], dict[str, float]], meta: dict | None = None):
    """Equilibrate, then call ``measure`` after every sweep and bin the results.

    This is the generic (Python callback) path; :func:`bilayer_qmc.estimators.sample`
    is the compiled path used for production runs.
    """
    from .estimators import ObservableSeries

    equilibrate(cfg, n_equil)
    sums: dict[str, np.ndarray] = {}
    for b in range(n_bins):
        for _ in range(bin_size):
            mc_sweep(cfg)
            for key, value in measure(cfg).items():
                sums.setdefault(key, np.zeros(n_bins))[b] += value
    bins = {key: v / bin_size for key, v in sums.items()}
    return ObservableSeries.from_bins(bins, meta=meta or {})


def insert_probability(cfg: SseConfig, n: int) -> float:
    """Acceptance for inserting a diagonal operator when ``n`` are present."""
    return min(cfg.beta * cfg.w_total / (cfg.M - n), 1.0)


def remove_probability(cfg: SseConfig, n: int) -> float:
    """Acceptance for removing a diagonal operator when ``n`` are present."""
    return min((cfg.M - n + 1) / (cfg.beta * cfg.w_total), 1.0)


def energy_shift(lattice: LatticeSpec, couplings: Couplings) -> float:
    """Constant (2 N_I J + N_H J') / 4 removed by the operator decomposition."""
    return (2 * lattice.N_I * couplings.J + lattice.N_H * couplings.Jp) / 4.0


def check_invariants(cfg: SseConfig) -> None:
    """Raise ``AssertionError`` if the configuration is not a valid SSE state."""
    seams = _propagate(cfg.ops, cfg.state, cfg.bond_sites)
    assert np.array_equal(seams[-1], cfg.state), "propagated state is not periodic"
    assert np.array_equal(cfg.nops, (cfg.ops >= 0).sum(axis=1)), "operator count mismatch"
    assert cfg.n2 % 2 == 0, "odd number of off-diagonal operators"
    s = cfg.state.copy()
    for k in range(cfg.n_blocks):
        bs = cfg.bond_sites[k]
        for p in range(cfg.M):
            op = cfg.ops[k, p]
            if op < 0:
                continue
            b, kind = divmod(int(op), 3)
            s1, s2 = bs[b]
            if kind == ISING_DIAG:
                assert b in cfg.ising_bonds and s[s1] == s[s2], f"bad Ising vertex at {k},{p}"
            else:
                assert b in cfg.heis_bonds and s[s1] != s[s2], f"bad Heisenberg vertex at {k},{p}"
                if kind == HEIS_OFFDIAG:
                    s[s1], s[s2] = -s[s1], -s[s2]


def log_weight(cfg: SseConfig) -> float:
    """log of the product of vertex matrix elements (J/2 or J'/2 each)."""
    live = cfg.ops[cfg.ops >= 0]
    n_is = int(np.count_nonzero(live % 3 == ISING_DIAG))
    n_h = live.size - n_is
    J, Jp = cfg.couplings.J, cfg.couplings.Jp
    return n_is * math.log(J / 2) + (n_h * math.log(Jp / 2) if n_h else 0.0)


# ---------------------------------------------------------------------------
# checkpoint format
#
#   magic   8 bytes  b"BQMCCKPT"
#   version uint32 little-endian
#   hlen    uint32 little-endian
#   header  hlen bytes of UTF-8 JSON (sorted keys)
#   arrays  raw little-endian bytes, in the order listed in header["arrays"]

CHECKPOINT_MAGIC = b"BQMCCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack(header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    header = dict(header)
    header["arrays"] = [
        {"name": k, "dtype": np.asarray(a).dtype.newbyteorder("<").str, "shape": list(np.shape(a))}
        for k, a in arrays.items()
    ]
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)))
    buf.write(hbytes)
    for spec in header["arrays"]:
        buf.write(np.ascontiguousarray(arrays[spec["name"]], dtype=spec["dtype"]).tobytes())
    return buf.getvalue()


def _unpack(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} != supported {CHECKPOINT_VERSION}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arrays[spec["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(spec["shape"]).copy()
        offset += count * dt.itemsize
    return header, arrays


def to_bytes(cfg: SseConfig, extra_header: dict | None = None,
             extra_arrays: dict[str, np.ndarray] | None = None) -> bytes:
    header = {
        "L": cfg.lattice.L,
        "boundary": cfg.lattice.boundary.value,
        "J": cfg.couplings.J,
        "g": cfg.couplings.g,
        "beta": cfg.beta,
        "n_blocks": cfg.n_blocks,
        "M": cfg.M,
        "rng_state": cfg.rng.bit_generator.state,
        "extra": extra_header or {},
    }
    arrays = {"state": cfg.state, "ops": cfg.ops, "nops": cfg.nops}
    for k, a in (extra_arrays or {}).items():
        arrays["extra/" + k] = a
    return _pack(header, arrays)


def from_bytes(data: bytes, with_extra: bool = False, cls: type | None = None):
    header, arrays = _unpack(data)
    lat = build_lattice(header["L"], Boundary(header["boundary"]))
    rng = np.random.Generator(np.random.PCG64())
    cfg = (cls or SseConfig)(lat, Couplings(header["J"], header["g"]), header["beta"],
                    n_blocks=header["n_blocks"], M=header["M"], rng=rng)
    # set after construction, which consumes draws for the initial spins
    rng.bit_generator.state = header["rng_state"]
    cfg.state = arrays["state"].astype(np.int8)
    cfg.ops = arrays["ops"].astype(np.int64)
    cfg.nops = arrays["nops"].astype(np.int64)
    cfg._alloc_buffers()
    if not with_extra:
        return cfg
    extra = {k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}
    return cfg, header["extra"], extra


def save_checkpoint(path, cfg: SseConfig, extra_header=None, extra_arrays=None) -> None:
    from pathlib import Path

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(cfg, extra_header, extra_arrays))
    tmp.replace(path)


def load_checkpoint(path, with_extra: bool = False, cls: type | None = None):
    from pathlib import Path

    return from_bytes(Path(path).read_bytes(), with_extra=with_extra, cls=cls)
