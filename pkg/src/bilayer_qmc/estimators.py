"""Observables on SSE configurations and binned error analysis.

Per-site magnetization is m_bar = m / N with m = sum_i (S^z_A,i - S^z_B,i)
and N = 2 L^2 the total number of spins.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .sse import _mc_sweep, energy_shift

MIN_BINS = 10


@dataclass
class ScalarSet:
    m_abs: float
    m2: float
    m4: float
    U2: float
    chi: float
    E: float
    G: np.ndarray | None = None


def binder(m2: float, m4: float) -> float:
    """U2 = (3/2)(1 - R2/3) with R2 = <m^4>/<m^2>^2; NaN when <m^2> = 0."""
    if m2 <= 0:
        return math.nan
    return 1.5 * (1.0 - (m4 / m2 ** 2) / 3.0)


def susceptibility(m2: float, m_abs: float, beta: float, N: int) -> float:
    """chi = (beta/N)(<m^2> - <|m|>^2) written with per-site moments."""
    return beta * N * (m2 - m_abs ** 2)


def energy(n_mean: float, beta: float, lattice, couplings) -> float:
    return -n_mean / beta + energy_shift(lattice, couplings)


def measure_m(cfg) -> dict[str, float]:
    """Per-site staggered-layer magnetization at time slice 0 and its moments."""
    L2 = cfg.lattice.n_sites_per_layer
    s = cfg.state
    m = 0.5 * (int(s[:L2].sum()) - int(s[L2:2 * L2].sum())) / (2 * L2)
    return {"m": m, "m_abs": abs(m), "m2": m * m, "m4": m ** 4}


def correlation_G(cfg) -> np.ndarray:
    """G(dx, dy) = <S^z_r S^z_{r+d}> in layer A, averaged over r, indexed ``[dy, dx]``."""
    L = cfg.lattice.L
    a = 0.5 * cfg.state[: L * L].astype(float).reshape(L, L)
    out = np.empty((L, L))
    for dy in range(L):
        for dx in range(L):
            out[dy, dx] = np.mean(a * np.roll(np.roll(a, -dy, axis=0), -dx, axis=1))
    return out


# ---------------------------------------------------------------------------
# compiled sampling


@njit(cache=True)
def _moments_slice0(state, L2):
    s = 0
    for i in range(L2):
        s += state[i] - state[L2 + i]
    return 0.5 * s / (2 * L2)


@njit(cache=True)
def _moments_sliceavg(ops, state, bond_sites, L2, out):
    """Accumulate slice-averaged |m|, m^2, m^4 into ``out[0:3]``."""
    M = ops.shape[1]
    s = 0
    for i in range(L2):
        s += state[i] - state[L2 + i]
    bs = bond_sites[0]
    a1 = 0.0
    a2 = 0.0
    a4 = 0.0
    for p in range(M):
        op = ops[0, p]
        if op >= 0 and op % 3 == 2:
            b = op // 3
            i = bs[b, 0]
            # inter bond: (A_i, B_i) flip together, s changes by -4 sigma_A
            s -= 4 * state[i]
            state[i] = -state[i]
            state[bs[b, 1]] = -state[bs[b, 1]]
        m = 0.5 * s / (2 * L2)
        a1 += abs(m)
        a2 += m * m
        a4 += m * m * m * m
    out[0] = a1 / M
    out[1] = a2 / M
    out[2] = a4 / M


@njit(cache=True)
def _accumulate_G(state, L, acc):
    L2 = L * L
    for dy in range(L):
        for dx in range(L):
            t = 0.0
            for y in range(L):
                for x in range(L):
                    j = ((y + dy) % L) * L + (x + dx) % L
                    t += state[y * L + x] * state[j]
            acc[dy, dx] += 0.25 * t / L2


@njit(cache=True)
def _sample_bins(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total,
                 link, first, last, flip, stack, rng, L, n_bins, bin_size, measure_G, slice_average,
                 scalars, G_bins):
    L2 = L * L
    tmp = np.zeros(3)
    work = np.empty_like(state)
    for b in range(n_bins):
        for _ in range(bin_size):
            _mc_sweep(ops, nops, state, bond_sites, ising_bonds, heis_bonds, beta, p_ising, w_total,
                      link, first, last, flip, stack, rng)
            n = nops.sum()
            scalars[b, 0] += n
            scalars[b, 1] += n * n
            if slice_average:
                work[:] = state
                _moments_sliceavg(ops, work, bond_sites, L2, tmp)
                scalars[b, 2] += tmp[0]
                scalars[b, 3] += tmp[1]
                scalars[b, 4] += tmp[2]
            else:
                m = _moments_slice0(state, L2)
                scalars[b, 2] += abs(m)
                scalars[b, 3] += m * m
                scalars[b, 4] += m * m * m * m
            if measure_G:
                _accumulate_G(state, L, G_bins[b])
        scalars[b] /= bin_size
        if measure_G:
            G_bins[b] /= bin_size


SCALAR_LABELS = ("n", "n2", "m_abs", "m2", "m4")


def sample(cfg, n_bins: int, bin_size: int, measure_G: bool = False, slice_average: bool = False):
    """Run ``n_bins * bin_size`` sweeps (cutoff frozen); return per-bin means.

    Returns ``(scalars, G_bins)`` with ``scalars`` of shape ``(n_bins, 5)``
    ordered as :data:`SCALAR_LABELS` and ``G_bins`` of shape ``(n_bins, L, L)``
    (empty when ``measure_G`` is false).
    """
    if cfg.n_blocks != 1:
        raise ValueError("observable sampling needs a single-block configuration")
    L = cfg.lattice.L
    scalars = np.zeros((n_bins, len(SCALAR_LABELS)))
    G_bins = np.zeros((n_bins if measure_G else 0, L, L))
    _sample_bins(*cfg.kernel_args(), L, n_bins, bin_size, measure_G, slice_average, scalars, G_bins)
    return scalars, G_bins


# ---------------------------------------------------------------------------
# binning and errors


@dataclass
class Observable:
    label: str
    bins: np.ndarray
    mean: float
    error: float
    reliable: bool = True


def bin_and_error(raw, bin_size: int, label: str = "x") -> Observable:
    """Group a raw time series into bins of ``bin_size`` and estimate the error of the mean."""
    raw = np.asarray(raw, dtype=float)
    n_bins = raw.size // bin_size
    bins = raw[: n_bins * bin_size].reshape(n_bins, bin_size).mean(axis=1)
    return _from_bins(label, bins)


def _from_bins(label: str, bins: np.ndarray) -> Observable:
    bins = np.asarray(bins, dtype=float)
    k = bins.size
    mean = float(bins.mean()) if k else math.nan
    err = float(bins.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
    return Observable(label, bins, mean, err, reliable=k >= MIN_BINS)


def jackknife(bins: dict[str, np.ndarray], func, label: str = "f") -> Observable:
    """Jackknife estimate of ``func(**means)`` over bins.

    ``bins`` maps argument names to equal-length arrays of bin means. The
    returned ``bins`` field holds the leave-one-out estimates.
    """
    arrays = {k: np.asarray(v, dtype=float) for k, v in bins.items()}
    k = next(iter(arrays.values())).size
    full = func(**{name: a.mean() for name, a in arrays.items()})
    if k < 2:
        return Observable(label, np.array([full]), full, math.nan, reliable=False)
    sums = {name: a.sum() for name, a in arrays.items()}
    loo = np.array([func(**{name: (sums[name] - a[i]) / (k - 1) for name, a in arrays.items()})
                    for i in range(k)])
    loo_mean = loo.mean()
    err = math.sqrt((k - 1) / k * np.sum((loo - loo_mean) ** 2))
    # bias-corrected estimate
    mean = k * full - (k - 1) * loo_mean
    return Observable(label, loo, float(mean), float(err), reliable=k >= MIN_BINS)


def merge_bins(*series: np.ndarray) -> np.ndarray:
    """Concatenate bin arrays from independent chains (order-independent statistics)."""
    return np.concatenate([np.asarray(s) for s in series], axis=0)


@dataclass
class ObservableSeries:
    observables: dict[str, Observable]
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_bins(cls, bins: dict[str, np.ndarray], meta: dict | None = None) -> "ObservableSeries":
        return cls({k: _from_bins(k, v) for k, v in bins.items()}, meta=dict(meta or {}))

    def __getitem__(self, label: str) -> Observable:
        return self.observables[label]

    def rows(self) -> list[dict]:
        keys = ("L", "g", "beta", "seed")
        base = {k: self.meta.get(k, "") for k in keys}
        return [
            {**base, "observable": o.label, "mean": o.mean, "error": o.error, "n_bins": o.bins.size}
            for o in self.observables.values()
        ]

    def to_json(self) -> str:
        return json.dumps({"meta": self.meta, "rows": self.rows()}, sort_keys=True, default=_fmt_json)


CSV_FIELDS = ("L", "g", "beta", "seed", "observable", "mean", "error", "n_bins")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _fmt_json(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(type(x))


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "L": int(r["L"]), "g": float(r["g"]), "beta": float(r["beta"]), "seed": r["seed"],
            "observable": r["observable"], "mean": float(r["mean"]), "error": float(r["error"]),
            "n_bins": int(r["n_bins"]),
        })
    return rows


def series_from_samples(scalars: np.ndarray, G_bins: np.ndarray, lattice, couplings, beta: float,
                        meta: dict | None = None) -> ObservableSeries:
    """Turn compiled per-bin accumulators into the full observable set."""
    N = lattice.n_spins
    cols = dict(zip(SCALAR_LABELS, scalars.T))
    shift = energy_shift(lattice, couplings)
    obs = {
        "E": _from_bins("E", -cols["n"] / beta + shift),
        "m_abs": _from_bins("m_abs", cols["m_abs"]),
        "m2": _from_bins("m2", cols["m2"]),
        "m4": _from_bins("m4", cols["m4"]),
        "n": _from_bins("n", cols["n"]),
    }
    obs["U2"] = jackknife({"m2": cols["m2"], "m4": cols["m4"]}, binder, "U2")
    obs["chi"] = jackknife({"m2": cols["m2"], "m_abs": cols["m_abs"]},
                           lambda m2, m_abs: susceptibility(m2, m_abs, beta, N), "chi")
    L = lattice.L
    if G_bins.size:
        for dy in range(L):
            for dx in range(L):
                lab = f"G_{dx}_{dy}"
                obs[lab] = _from_bins(lab, G_bins[:, dy, dx])
    return ObservableSeries(obs, meta=dict(meta or {}))


def G_table(series: ObservableSeries, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and error of G(dx, dy) as ``[dy, dx]`` arrays."""
    mean = np.empty((L, L))
    err = np.empty((L, L))
    for dy in range(L):
        for dx in range(L):
            o = series[f"G_{dx}_{dy}"]
            mean[dy, dx], err[dy, dx] = o.mean, o.error
    return mean, err
