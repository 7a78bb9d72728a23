import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilayer_qmc import fss

NU = 0.63
SIZES = (8, 12, 16)


def master(x):
    # smooth, monotone decreasing, exactly cubic so local interpolation is exact
    return 0.6 - 0.08 * x - 0.001 * x ** 3


def master_smooth(x):
    return 0.55 - 0.45 * np.tanh(0.3 * x)


def scaling_dataset(f=master_smooth, g_c=3.0, nu=NU, sizes=SIZES, noise=0.0, seed=0,
                    grid=np.linspace(2.9, 3.1, 9), chi=False):
    rng = np.random.default_rng(seed)
    obs = {"U2": {}}
    if chi:
        obs["chi"] = {}
    for L in sizes:
        x = (grid - g_c) / g_c * L ** (1 / nu)
        err = np.full(grid.shape, max(noise, 1e-4))
        obs["U2"][L] = (grid.copy(), f(x) + noise * rng.standard_normal(grid.shape), err)
        if chi:
            y = L ** (1.24 / nu) * np.exp(-x ** 2 / 4)
            e = y * max(noise, 1e-4)
            obs["chi"][L] = (grid.copy(), y + e * rng.standard_normal(grid.shape), e)
    return fss.SweepDataset(obs)


def test_exact_scaling_crossings():
    ds = scaling_dataset(f=master, grid=np.linspace(2.9, 3.2, 7))
    cs = fss.all_crossings(ds, pairs="all", n_boot=20)
    assert len(cs) == 3
    for c in cs:
        assert c.g == pytest.approx(3.0, abs=1e-6)


def test_consecutive_pairs():
    ds = scaling_dataset(f=master, sizes=(8, 12, 16, 24))
    assert [(c.L1, c.L2) for c in fss.all_crossings(ds, pairs="consecutive", n_boot=5)] == [
        (8, 12), (12, 16), (16, 24)]


def test_no_crossing():
    g = np.linspace(2.9, 3.2, 7)
    U = 0.5 + 0.1 * g
    e = np.full(g.shape, 1e-3)
    with pytest.raises(fss.NoCrossingError):
        fss.find_crossing(g, U, e, g, U + 0.1, e)


def test_crossing_error_reflects_noise():
    g = np.linspace(2.9, 3.1, 9)
    e = np.full(g.shape, 2e-3)
    c = fss.find_crossing(g, 1 - (g - 3), e, g, 1 - 3 * (g - 3), e, n_boot=200)
    assert c.g == pytest.approx(3.0, abs=1e-9)
    assert 0 < c.error < 0.01


def test_extrapolation_recovers_gc():
    L = np.array([8, 12, 16, 24, 32, 48])
    ext = fss.extrapolate_gc(L, 3.045 + 0.5 * L ** -2.0)
    assert ext.g_c == pytest.approx(3.045, abs=1e-3)
    assert ext.omega_free
    assert ext.omega == pytest.approx(2.0, abs=1e-2)


def test_extrapolation_constant_falls_back():
    ext = fss.extrapolate_gc([8, 12, 16], [3.01, 3.01, 3.01])
    assert ext.g_c == pytest.approx(3.01)
    assert not ext.omega_free
    assert ext.omega == fss.FALLBACK_OMEGA


def test_extrapolation_pairs():
    pairs = np.array([[8, 12], [8, 16], [12, 16]], dtype=float)
    drift = fss._drift(pairs, 2.0, NU)
    ext = fss.extrapolate_gc(pairs, 3.045 + 0.7 * drift)
    assert ext.g_c == pytest.approx(3.045, abs=1e-9)


def test_extrapolation_needs_three_points():
    with pytest.raises(fss.FitError):
        fss.extrapolate_gc([8, 12], [3.0, 3.01])


def test_collapse_cost_small_at_truth():
    # residuals about the true master curve sit at the noise level on average
    goods = []
    for seed in range(10):
        ds = scaling_dataset(noise=2e-3, seed=seed, sizes=(8, 12, 16, 24), grid=np.linspace(2.85, 3.15, 31))
        good = fss.collapse_cost(ds, fss.CollapseParams(3.0, NU))
        bad = fss.collapse_cost(ds, fss.CollapseParams(3.0, 2 * NU))
        assert bad >= 2 * good
        goods.append(good)
    assert np.mean(goods) <= 1.0
    noiseless = scaling_dataset(sizes=(8, 12, 16, 24), grid=np.linspace(2.85, 3.15, 31))
    assert fss.collapse_cost(noiseless, fss.CollapseParams(3.0, NU)) < 0.01


def test_chi_collapse_prefers_truth():
    ds = scaling_dataset(noise=5e-3, seed=5, grid=np.linspace(2.85, 3.15, 13), chi=True)
    good = fss.collapse_cost(ds, fss.CollapseParams(3.0, NU, 1.24), "chi")
    for nu in (0.5, 1.0):
        assert fss.collapse_cost(ds, fss.CollapseParams(3.0, nu, 1.24), "chi") >= 2 * good


def test_collapse_needs_two_sizes():
    ds = scaling_dataset(sizes=(8,))
    with pytest.raises(fss.CollapseError):
        fss.collapse_cost(ds, fss.CollapseParams(3.0))


def test_collapse_params_validation():
    with pytest.raises(ValueError):
        fss.CollapseParams(3.0, nu=0.0)


@settings(max_examples=20)
@given(st.permutations(SIZES), st.floats(-1.0, 1.0), st.floats(0.5, 1.2))
def test_collapse_cost_invariances(order, shift, nu):
    ds = scaling_dataset(noise=2e-3, seed=7, grid=np.linspace(2.85, 3.15, 13))
    params = fss.CollapseParams(3.0, nu)
    ref = fss.collapse_cost(ds, params)
    relabeled = fss.SweepDataset({"U2": {L: ds.obs["U2"][L] for L in order}})
    assert fss.collapse_cost(relabeled, params) == pytest.approx(ref, rel=1e-9)
    shifted = fss.SweepDataset({"U2": {L: (g + shift, m, e) for L, (g, m, e) in ds.obs["U2"].items()}})
    assert fss.collapse_cost(shifted, fss.CollapseParams(3.0 + shift, nu * 1.0)) == pytest.approx(ref, rel=1e-6)


def test_optimize_collapse_moves_toward_truth():
    ds = scaling_dataset(noise=1e-3, seed=9, grid=np.linspace(2.85, 3.15, 13))
    p, cost = fss.optimize_collapse(ds, "U2", fss.CollapseParams(3.01, 0.7))
    assert abs(p.g_c - 3.0) < 0.01 and abs(p.nu - NU) < 0.07


def test_collapse_csv():
    ds = scaling_dataset()
    text = fss.collapse_csv(ds, fss.CollapseParams(3.0))
    assert text.splitlines()[0] == "observable,L,g,x,y,sigma"
    assert len(text.splitlines()) == 1 + 3 * 9


def test_powerlaw_exact():
    r = np.arange(1, 13, dtype=float)
    p = fss.powerlaw_fit(r, r ** -1.036)
    assert p.exponent == pytest.approx(1.036, abs=1e-6)
    assert fss.powerlaw_fit(r, np.full(r.shape, 0.3)).exponent == pytest.approx(0.0, abs=1e-9)


def test_powerlaw_weighted_and_window():
    r = np.arange(1, 13, dtype=float)
    G = 2 * r ** -1.2
    p = fss.powerlaw_fit(r, G, err=0.01 * G, window=(2, 8))
    assert p.exponent == pytest.approx(1.2, abs=1e-9)
    assert p.n_points == 7


def test_powerlaw_periodic_images():
    L = 24
    r = np.arange(1, L, dtype=float)
    G = 0.3 * (r ** -1.036 + (L - r) ** -1.036)
    assert fss.powerlaw_fit(r, G, periodic_L=L).exponent == pytest.approx(1.036, abs=1e-6)
    assert fss.powerlaw_fit(r, G, window=(2, 12)).exponent < 1.0


def test_powerlaw_excludes_nonpositive_and_counts():
    r = np.arange(1, 7, dtype=float)
    G = r ** -1.0
    G[3:] = -1.0
    with pytest.raises(fss.FitError):
        fss.powerlaw_fit(r, G)


def test_analyze_report():
    ds = scaling_dataset(f=master, grid=np.linspace(2.9, 3.2, 7))
    rows = []
    for L, (g, m, e) in ds.obs["U2"].items():
        for gi, mi, ei in zip(g, m, e):
            rows.append({"L": L, "g": gi, "observable": "U2", "mean": mi, "error": ei})
    report = fss.analyze(rows)
    assert report["sizes"] == list(SIZES)
    assert len(report["crossings"]) == 3
    assert report["g_c"] == pytest.approx(3.0, abs=1e-6)
