import numpy as np
import pytest

from bilayer_qmc import ed
from bilayer_qmc import replica as rep
from bilayer_qmc.lattice import build_lattice
from bilayer_qmc.sse import Couplings, to_bytes, from_bytes, mc_sweep, adjust_cutoff

SMALL = build_lattice(2, "open")


def test_n_rep_one_rejected():
    with pytest.raises(ValueError):
        rep.build_manifold(SMALL, Couplings(1.0, 3.0), 8.0, n_rep=1)


def test_two_replicas_share_A_only():
    lat = build_lattice(3)
    man = rep.build_manifold(lat, Couplings(1.0, 3.0), 2.0, n_rep=2, seed=0)
    L2 = 9
    assert man.n_vsites == 3 * L2
    a0, a1 = man.bond_sites
    intra_a = slice(0, lat.N_I)
    assert np.array_equal(a0[intra_a], a1[intra_a])
    inter = slice(2 * lat.N_I, None)
    assert np.array_equal(a0[inter, 0], a1[inter, 0])
    assert np.all(a0[inter, 1] < 2 * L2) and np.all(a1[inter, 1] >= 2 * L2)


def test_invariants_after_many_sweeps():
    man = rep.build_manifold(build_lattice(3), Couplings(1.0, 3.0), 3.0, n_rep=3, seed=4)
    for _ in range(1000):
        mc_sweep(man)
        adjust_cutoff(man)
    rep.check_manifold(man)
    assert isinstance(from_bytes(to_bytes(man), cls=rep.ReplicaManifold), rep.ReplicaManifold)


def test_polarized_seams():
    lat = build_lattice(4)
    man = rep.build_manifold(lat, Couplings(1.0, 3.0), 1.0, n_rep=4, seed=0)
    man.state[:16] = 1
    Gk = rep.measure_G_momentum(man)
    expected = np.zeros((4, 4))
    expected[0, 0] = 1.0
    assert np.allclose(Gk, expected)
    assert np.allclose(rep.measure_G_onsite(man), 1.0)


def test_onsite_tau_zero_exact():
    man = rep.build_manifold(build_lattice(3), Couplings(1.0, 3.0), 2.0, n_rep=4, seed=1)
    corr = rep.run_manifold(man, 100, 10, 20)
    mean, err = corr.onsite()
    assert np.all(mean[:, 0] == 1.0)


def test_matches_ed_on_small_manifold():
    c = Couplings(1.0, 3.0)
    beta, n = 8.0, 4
    man = rep.build_manifold(SMALL, c, beta, n_rep=n, seed=11)
    corr = rep.run_manifold(man, 2000, 20, 500)
    exact = ed.eh_report(ed.rho_A_for(SMALL, c, beta), 2, n=n)
    m, e = corr.onsite()
    assert np.allclose(m, exact.G_onsite, atol=1e-9)
    m, e = corr.momentum()
    ref = exact.G_momentum.real
    assert np.allclose(exact.G_momentum.imag, 0, atol=1e-12)
    assert np.all(np.abs(m - ref) <= 3 * e + 1e-12)
    drift, derr = corr.tau_drift()
    assert np.all(np.abs(drift) <= 3 * derr + 1e-12)


def test_deep_ferromagnet_momentum_profile():
    lat = build_lattice(4)
    man = rep.build_manifold(lat, Couplings(1.0, 1.0), 8.0, n_rep=4, seed=2)
    corr = rep.run_manifold(man, 300, 10, 30)
    m, _ = corr.momentum()
    assert np.all(m[:, 0, 0] > 0.9)
    others = m.copy()
    others[:, 0, 0] = 0
    assert np.all(np.abs(others) < 0.05)


def test_csv_rows():
    man = rep.build_manifold(build_lattice(3), Couplings(1.0, 3.0), 2.0, n_rep=2, seed=1)
    corr = rep.run_manifold(man, 10, 10, 5)
    lines = rep.momentum_csv(corr, 3.0, 2.0).splitlines()
    assert lines[0].split(",") == list(rep.GK_FIELDS)
    assert len(lines) == 1 + 9 * 2
    lines = rep.onsite_csv(corr, 3.0, 2.0).splitlines()
    assert len(lines) == 1 + 9 * 2
