"""Finite-size scaling: Binder crossings, g_c extrapolation, data collapse, power-law fits."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import brentq, curve_fit, minimize

NU_3D_ISING = 0.63
GAMMA_3D_ISING = 1.24
ETA_3D_ISING = 0.036
FALLBACK_OMEGA = 2.0


class NoCrossingError(ValueError):
    pass


class FitError(ValueError):
    pass


class CollapseError(ValueError):
    pass


@dataclass(frozen=True)
class CollapseParams:
    g_c: float
    nu: float = NU_3D_ISING
    gamma: float = GAMMA_3D_ISING
    eta: float = ETA_3D_ISING
    omega: float = FALLBACK_OMEGA

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")


@dataclass
class SweepDataset:
    """Per-size curves ``obs[name][L] = (g, mean, err)`` with g sorted."""

    obs: dict[str, dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]]
    beta_policy: str = "2L"

    @property
    def sizes(self) -> list[int]:
        return sorted(next(iter(self.obs.values())).keys())

    def curve(self, name: str, L: int):
        return self.obs[name][L]

    @classmethod
    def from_rows(cls, rows: list[dict], names=("U2", "chi", "m_abs"), beta_policy: str = "2L") -> "SweepDataset":
        obs: dict[str, dict[int, list]] = {n: {} for n in names}
        for r in rows:
            if r["observable"] in obs:
                obs[r["observable"]].setdefault(int(r["L"]), []).append((r["g"], r["mean"], r["error"]))
        out = {}
        for name, per_L in obs.items():
            if not per_L:
                continue
            out[name] = {}
            for L, pts in per_L.items():
                pts.sort()
                a = np.array(pts, dtype=float)
                out[name][L] = (a[:, 0], a[:, 1], a[:, 2])
        if not out:
            raise ValueError("no usable observables in rows")
        return cls(out, beta_policy)


# ---------------------------------------------------------------------------
# crossings


def _stencil(g: np.ndarray, x: float) -> slice:
    j = int(np.clip(np.searchsorted(g, x) - 1, 0, len(g) - 2))
    lo = max(0, min(j - 1, len(g) - 4))
    return slice(lo, lo + 4)


def _local_cubic(g: np.ndarray, U: np.ndarray, x: float) -> float:
    sl = _stencil(g, x)
    gs, us = g[sl], U[sl]
    return float(np.polynomial.Polynomial.fit(gs, us, deg=len(gs) - 1)(x))


def _roots(g1, U1, g2, U2) -> list[float]:
    lo, hi = max(g1[0], g2[0]), min(g1[-1], g2[-1])
    if not lo < hi:
        return []
    grid = np.unique(np.concatenate([g1, g2, [lo, hi]]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    roots = []
    for a, b in itertools.pairwise(grid):
        mid = 0.5 * (a + b)
        s1, s2 = _stencil(g1, mid), _stencil(g2, mid)
        p1 = np.polynomial.Polynomial.fit(g1[s1], U1[s1], deg=len(g1[s1]) - 1)
        p2 = np.polynomial.Polynomial.fit(g2[s2], U2[s2], deg=len(g2[s2]) - 1)
        d = p1 - p2
        da, db = d(a), d(b)
        if da == 0.0:
            roots.append(float(a))
        elif da * db < 0:
            roots.append(float(brentq(d, a, b, xtol=1e-13)))
    if len(grid) and (_local_cubic(g1, U1, grid[-1]) - _local_cubic(g2, U2, grid[-1])) == 0.0:
        roots.append(float(grid[-1]))
    return sorted(set(roots))


@dataclass
class Crossing:
    L1: int
    L2: int
    g: float
    error: float
    n_roots: int = 1
    boot_failures: int = 0


def find_crossing(g1, U1, e1, g2, U2, e2, *, L1: int = 0, L2: int = 0, n_boot: int = 200,
                  seed: int = 0) -> Crossing:
    """Crossing of two Binder curves from local cubic interpolants.

    The error is the spread of crossings over ``n_boot`` parametric resamples
    of the input points.
    """
    g1, U1, e1, g2, U2, e2 = (np.asarray(a, dtype=float) for a in (g1, U1, e1, g2, U2, e2))
    roots = _roots(g1, U1, g2, U2)
    if not roots:
        raise NoCrossingError(f"curves L={L1} and L={L2} do not cross in the window")
    # several roots only appear with noisy, nearly tangent curves; take the central one
    center = 0.5 * (max(g1[0], g2[0]) + min(g1[-1], g2[-1]))
    g_star = min(roots, key=lambda r: abs(r - center))
    rng = np.random.default_rng(seed)
    boots = []
    failures = 0
    for _ in range(n_boot):
        r = _roots(g1, U1 + e1 * rng.standard_normal(U1.shape), g2, U2 + e2 * rng.standard_normal(U2.shape))
        if r:
            boots.append(min(r, key=lambda x: abs(x - g_star)))
        else:
            failures += 1
    err = float(np.std(boots, ddof=1)) if len(boots) > 1 else math.nan
    return Crossing(L1, L2, g_star, err, len(roots), failures)


def all_crossings(ds: SweepDataset, name: str = "U2", pairs: str = "all", **kw) -> list[Crossing]:
    sizes = ds.sizes
    combos = list(itertools.combinations(sizes, 2)) if pairs == "all" else list(itertools.pairwise(sizes))
    out = []
    for L1, L2 in combos:
        c1, c2 = ds.curve(name, L1), ds.curve(name, L2)
        out.append(find_crossing(*c1, *c2, L1=L1, L2=L2, **kw))
    return out


# ---------------------------------------------------------------------------
# extrapolation


@dataclass
class Extrapolation:
    g_c: float
    g_c_error: float
    amplitude: float
    omega: float
    omega_free: bool
    chi2_dof: float
    notes: list[str] = field(default_factory=list)


def _drift(sizes: np.ndarray, omega: float, nu: float) -> np.ndarray:
    if sizes.ndim == 1:
        return sizes ** (-omega)
    L1, L2 = sizes[:, 0], sizes[:, 1]
    return (L1 ** (-omega) - L2 ** (-omega)) / (L2 ** (1 / nu) - L1 ** (1 / nu))


def extrapolate_gc(sizes, g_star, errors=None, *, nu: float = NU_3D_ISING) -> Extrapolation:
    """Weighted fit g*(L) = g_c + a L^-omega.

    ``sizes`` is either a vector of L or an ``(k, 2)`` array of crossing
    pairs; for pairs the drift term is the standard two-size crossing shift
    (L1^-w - L2^-w) / (L2^(1/nu) - L1^(1/nu)). omega is fitted when there
    are at least four points and the fit is identifiable; otherwise it is
    fixed at 2.
    """
    sizes = np.asarray(sizes, dtype=float)
    y = np.asarray(g_star, dtype=float)
    if y.size < 3:
        raise FitError("need at least three crossing points")
    sig = np.ones_like(y) if errors is None else np.asarray(errors, dtype=float)
    sig = np.where(np.isfinite(sig) & (sig > 0), sig, np.nanmax(np.r_[sig[np.isfinite(sig)], 1e-12]))
    notes = []

    if y.size >= 4 and np.ptp(y) > 0:
        def model(_, gc, a, w):
            return gc + a * _drift(sizes, w, nu)

        try:
            p, cov = curve_fit(model, np.arange(y.size), y, p0=(y[-1], 0.0, 1.0), sigma=sig,
                               absolute_sigma=errors is not None, bounds=([-np.inf, -np.inf, 0.05], [np.inf, np.inf, 8.0]),
                               maxfev=20000)
            perr = np.sqrt(np.diag(cov))
            if np.all(np.isfinite(perr)):
                res = (y - model(None, *p)) / sig
                dof = y.size - 3
                return Extrapolation(float(p[0]), float(perr[0]), float(p[1]), float(p[2]), True,
                                     float(res @ res / dof), notes)
            notes.append("free-omega fit not identifiable")
        except (RuntimeError, ValueError) as exc:
            notes.append(f"free-omega fit failed: {exc}")
    else:
        notes.append("too few points or constant crossings for a free-omega fit")

    # fixed omega: weighted linear least squares in (g_c, a)
    X = np.stack([np.ones_like(y), _drift(sizes, FALLBACK_OMEGA, nu)], axis=1)
    W = 1.0 / sig ** 2
    A = X.T @ (X * W[:, None])
    coef = np.linalg.solve(A, X.T @ (W * y))
    cov = np.linalg.inv(A)
    res = (y - X @ coef) / sig
    dof = max(y.size - 2, 1)
    chi2 = float(res @ res / dof)
    if errors is None:
        cov = cov * chi2
    return Extrapolation(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), FALLBACK_OMEGA, False,
                         chi2, notes + ["omega fixed at fallback value"])


# ---------------------------------------------------------------------------
# data collapse


def collapse_points(ds: SweepDataset, params: CollapseParams, name: str):
    """Rescaled ``(x, y, sigma, L)`` with x = t L^(1/nu), y = O L^kappa."""
    kappa = 0.0 if name == "U2" else -params.gamma / params.nu
    xs, ys, ss, Ls = [], [], [], []
    for L in ds.sizes:
        g, m, e = ds.curve(name, L)
        t = (g - params.g_c) / params.g_c
        xs.append(t * L ** (1 / params.nu))
        ys.append(m * L ** kappa)
        ss.append(e * L ** kappa)
        Ls.append(np.full(g.shape, L))
    return tuple(np.concatenate(a) for a in (xs, ys, ss, Ls))


def collapse_cost(ds: SweepDataset, params: CollapseParams, name: str = "U2") -> float:
    """Error-normalized mean squared residual about a smoothing-spline master curve."""
    if len(ds.sizes) < 2:
        raise CollapseError("collapse needs at least two sizes")
    x, y, s, Ls = collapse_points(ds, params, name)
    lo = max(x[Ls == L].min() for L in ds.sizes)
    hi = min(x[Ls == L].max() for L in ds.sizes)
    if not lo < hi:
        raise CollapseError("rescaled curves do not overlap")
    s = np.where(s > 0, s, np.min(s[s > 0]) if np.any(s > 0) else 1.0)
    # the master curve only sees x up to an affine map, which makes the cost
    # independent of the overall x scale
    u = (x - x.min()) / np.ptp(x)
    if np.unique(u).size < 5:
        raise CollapseError("too few distinct points for a master curve")
    fit = master_curve(u, y, 1.0 / s ** 2)
    res = (y - fit) / s
    return float(np.mean(res ** 2))


def master_curve(u: np.ndarray, y: np.ndarray, w: np.ndarray, n_segments: int | None = None) -> np.ndarray:
    """Penalized cubic B-spline through weighted points on [0, 1]; returns fitted values.

    Uniform knots, second-difference penalty, smoothing strength chosen by
    generalized cross-validation on a log grid.
    """
    n = u.size
    if n_segments is None:
        n_segments = int(np.clip(np.unique(u).size // 3, 4, 24))
    inner = np.linspace(0.0, 1.0, n_segments + 1)
    knots = np.r_[[0.0] * 3, inner, [1.0] * 3]
    B = BSpline.design_matrix(np.clip(u, 0.0, 1.0), knots, 3).toarray()
    nb = B.shape[1]
    D = np.diff(np.eye(nb), 2, axis=0)
    P = D.T @ D
    w = w / w.mean()
    BtWB = B.T @ (w[:, None] * B)
    BtWy = B.T @ (w * y)
    ridge = 1e-12 * np.trace(BtWB) * np.eye(nb)
    best = None
    for lam in np.logspace(-8, 6, 57):
        A = BtWB + lam * P + ridge
        coef = np.linalg.solve(A, BtWy)
        edf = float(np.trace(np.linalg.solve(A, BtWB)))
        if edf >= n - 0.5:
            continue
        fit = B @ coef
        gcv = n * float(np.sum(w * (y - fit) ** 2)) / (n - edf) ** 2
        if best is None or gcv < best[0]:
            best = (gcv, fit)
    if best is None:
        raise CollapseError("master-curve fit is not identifiable")
    return best[1]


def optimize_collapse(ds: SweepDataset, name: str, start: CollapseParams) -> tuple[CollapseParams, float]:
    """Minimize the collapse cost over (g_c, nu) from ``start``."""

    def f(p):
        gc, nu = p
        if nu <= 0.05:
            return 1e12
        try:
            return collapse_cost(ds, CollapseParams(gc, nu, start.gamma, start.eta, start.omega), name)
        except CollapseError:
            return 1e12

    res = minimize(f, x0=[start.g_c, start.nu], method="Nelder-Mead",
                   options={"xatol": 1e-5, "fatol": 1e-6, "maxiter": 2000})
    gc, nu = res.x
    return CollapseParams(float(gc), float(nu), start.gamma, start.eta, start.omega), float(res.fun)


def collapse_csv(ds: SweepDataset, params: CollapseParams, names=("U2", "chi")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["observable", "L", "g", "x", "y", "sigma"])
    for name in names:
        if name not in ds.obs:
            continue
        x, y, s, Ls = collapse_points(ds, params, name)
        g = np.concatenate([ds.curve(name, L)[0] for L in ds.sizes])
        for row in zip(Ls, g, x, y, s):
            w.writerow([name, int(row[0])] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# correlation power law


@dataclass
class PowerLaw:
    exponent: float
    error: float
    n_points: int


def powerlaw_fit(r, G, err=None, window: tuple[float, float] | None = None,
                 periodic_L: int | None = None) -> PowerLaw:
    """Fit G(r) ~ r^-p and return p.

    By default this is a weighted linear regression of log G on log r. With
    ``periodic_L`` the nearest periodic image is included,
    G(r) = A (r^-p + (L - r)^-p), which removes most of the finite-size
    floor of an axis correlation on a torus.
    """
    r = np.asarray(r, dtype=float)
    G = np.asarray(G, dtype=float)
    e = None if err is None else np.asarray(err, dtype=float)
    lo, hi = window if window is not None else (2.0, np.inf)
    keep = (r >= lo) & (r <= hi) & (G > 0)
    if periodic_L is not None:
        keep &= r <= periodic_L / 2
    if keep.sum() < 4:
        raise FitError(f"only {int(keep.sum())} usable points in window {lo}..{hi}")
    lr, lg = np.log(r[keep]), np.log(G[keep])
    weighted = e is not None and np.all(e[keep] > 0)
    if periodic_L is not None:
        L = float(periodic_L)

        def model(x, logA, p):
            return logA + np.log(x ** -p + (L - x) ** -p)

        sig = e[keep] / G[keep] if weighted else None
        p, cov = curve_fit(model, r[keep], lg, p0=(lg[0], 1.0), sigma=sig, absolute_sigma=weighted)
        return PowerLaw(float(p[1]), float(np.sqrt(cov[1, 1])), int(keep.sum()))
    if weighted:
        coef, cov = np.polyfit(lr, lg, 1, w=G[keep] / e[keep], cov="unscaled")
    else:
        coef, cov = np.polyfit(lr, lg, 1, cov=keep.sum() > 4 or "unscaled")
    return PowerLaw(float(-coef[0]), float(np.sqrt(cov[0, 0])), int(keep.sum()))


# ---------------------------------------------------------------------------
# report


def analyze(rows: list[dict], *, nu: float = NU_3D_ISING, pairs: str = "all", seed: int = 0) -> dict:
    ds = SweepDataset.from_rows(rows)
    report: dict = {"sizes": ds.sizes, "crossings": [], "notes": []}
    crossings = []
    for c in all_crossings(ds, "U2", pairs=pairs, seed=seed):
        crossings.append(c)
        report["crossings"].append({"L1": c.L1, "L2": c.L2, "g": c.g, "error": c.error, "n_roots": c.n_roots})
    if len(crossings) >= 3:
        ext = extrapolate_gc([[c.L1, c.L2] for c in crossings], [c.g for c in crossings],
                             [c.error for c in crossings], nu=nu)
        report["g_c"] = ext.g_c
        report["g_c_error"] = ext.g_c_error
        report["omega"] = ext.omega
        report["omega_free"] = ext.omega_free
        report["chi2_dof"] = ext.chi2_dof
        report["notes"] += ext.notes
    else:
        report["notes"].append("fewer than three crossings; no extrapolation")
    return report
