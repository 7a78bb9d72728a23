import math

import numpy as np
import pytest

from bilayer_qmc import ed
from bilayer_qmc.lattice import build_lattice
from bilayer_qmc.sse import Couplings

SMALL = build_lattice(2, "open")
DIMER = build_lattice(1, "open")


def test_dimer_spectrum():
    H = ed.build_hamiltonian(DIMER, Couplings.from_jj(1.0, 1.0))
    assert np.allclose(np.linalg.eigvalsh(H), [-0.75, 0.25, 0.25, 0.25])


def test_ising_limit_ground_energy():
    # 8 intra bonds (4 per layer), each -J/4 when aligned
    E0 = np.linalg.eigvalsh(ed.build_hamiltonian(SMALL, Couplings(1.0, 0.0)))[0]
    assert E0 == pytest.approx(-2.0)


def test_ground_energy_regression():
    E0 = np.linalg.eigvalsh(ed.build_hamiltonian(SMALL, Couplings(1.0, 3.0)))[0]
    assert E0 == pytest.approx(-9.173392120728668, abs=1e-10)


def test_hamiltonian_is_symmetric():
    H = ed.build_hamiltonian(SMALL, Couplings(1.0, 2.0), h=0.3)
    assert np.allclose(H, H.T)


def test_too_large_rejected():
    with pytest.raises(ValueError):
        ed.build_hamiltonian(build_lattice(3), Couplings(1.0, 1.0))


def test_dimer_reduced_state():
    rho_A = ed.rho_A_for(DIMER, Couplings.from_jj(1.0, 1.0), 60.0)
    assert np.allclose(rho_A, np.eye(2) / 2, atol=1e-12)


def test_infinite_temperature_is_maximally_mixed():
    rho_A = ed.reduce_to_A(ed.thermal_rho(ed.build_hamiltonian(SMALL, Couplings(1.0, 3.0)), 0.0), SMALL)
    assert np.allclose(rho_A, np.eye(16) / 16)


def test_reduced_state_valid():
    rho_A = ed.rho_A_for(SMALL, Couplings(1.0, 3.0), 8.0)
    assert rho_A.shape == (16, 16)
    assert np.trace(rho_A) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho_A).min() > -1e-12


def test_dimer_report():
    rep = ed.eh_report(ed.rho_A_for(DIMER, Couplings.from_jj(1.0, 1.0), 60.0), 1, n=4)
    assert np.allclose(rep.eh_levels, [math.log(2)] * 2)
    assert rep.entropy == pytest.approx(math.log(2))
    assert rep.diagonality_defect < 1e-12
    assert np.allclose(rep.G_onsite, 1.0)


@pytest.mark.parametrize("g", [0.5, 1.0, 3.0, 5.0])
@pytest.mark.parametrize("beta", [1.0, 4.0, 8.0])
def test_diagonal_without_field(g, beta):
    rep = ed.eh_report(ed.rho_A_for(SMALL, Couplings(1.0, g), beta), 2, n=4)
    assert rep.diagonality_defect < 1e-12
    assert np.allclose(rep.G_onsite, 1.0, atol=1e-10)


def test_any_diagonal_rho_gives_unit_onsite(rng):
    p = rng.random(16)
    rep = ed.eh_report(np.diag(p), 2, n=3)
    assert np.allclose(rep.G_onsite, 1.0)


@pytest.mark.parametrize("h", [0.2, 0.5])
def test_transverse_field_breaks_diagonality(h):
    rep = ed.eh_report(ed.rho_A_for(SMALL, Couplings(1.0, 3.0), 8.0, h=h), 2, n=4)
    assert rep.diagonality_defect > 1e-3
    assert np.all(rep.G_onsite[:, 1] < 1 - 1e-6)


def test_entropy_grows_with_g():
    S = [ed.eh_report(ed.rho_A_for(SMALL, Couplings(1.0, g), 4.0), 2).entropy
         for g in (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)]
    assert np.all(np.diff(S) > 0)


def test_report_rejects_bad_input():
    with pytest.raises(ValueError):
        ed.eh_report(np.eye(4) / 4, 1, n=1)
    with pytest.raises(ValueError):
        ed.eh_report(np.zeros((4, 4)), 1)


def test_thermal_limits():
    # at g = 0 the layers are decoupled and their relative orientation is free
    obs = ed.thermal_observables(ed.build_hamiltonian(SMALL, Couplings(1.0, 0.0)), 60.0, SMALL)
    assert obs.m2 == pytest.approx(0.125)
    # an infinitesimal coupling locks them antiparallel: two saturated sectors
    obs = ed.thermal_observables(ed.build_hamiltonian(SMALL, Couplings(1.0, 1e-3)), 2e4, SMALL)
    assert obs.m2 == pytest.approx(0.25, abs=1e-6)
    obs = ed.thermal_observables(ed.build_hamiltonian(SMALL, Couplings(1.0, 3.0)), 0.0, SMALL)
    assert obs.m2 == pytest.approx(1 / (4 * 8))


def test_thermal_regression():
    c = Couplings(1.0, 3.0)
    obs = ed.thermal_observables(ed.build_hamiltonian(SMALL, c), 8.0, SMALL, c)
    expected = dict(E=-9.173392, m_abs=0.239370, m2=0.090256, m4=0.017046, U2=0.453736, chi=2.109317)
    for k, v in expected.items():
        assert getattr(obs, k) == pytest.approx(v, abs=2e-6), k
    assert obs.G[0, 0] == pytest.approx(0.25)


def test_report_json_shape():
    out = ed.report_json(SMALL, Couplings(1.0, 3.0), 8.0, n=4)
    assert len(out["G_onsite"]) == 4 and len(out["G_onsite"][0]) == 4
    assert np.array(out["G_momentum_real"]).shape == (4, 2, 2)
    assert out["observables"]["E"] == pytest.approx(-9.173392, abs=1e-6)
