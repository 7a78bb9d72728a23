import pytest
from hypothesis import given
from hypothesis import strategies as st

from bilayer_qmc.config import ConfigError, RunConfig, load_config, parse_config, serialize


def test_minimal_config_defaults():
    cfg = parse_config("")
    assert cfg.mode == "observables"
    assert cfg.sampling.bin_size == 100
    assert cfg.beta_for(8) == 16.0
    assert cfg.beta_for(12) == 24.0


def test_scalars_become_tuples():
    cfg = parse_config("[lattice]\nL = 6\n[couplings]\ng = 3\n")
    assert cfg.lattice.L == (6,)
    assert cfg.couplings.g == (3.0,)


def test_explicit_beta_and_policy():
    assert parse_config("[sampling]\nbeta = 5.0\n").beta_for(8) == 5.0
    assert parse_config('[sampling]\nbeta_policy = "3L"\n').beta_for(4) == 12.0


@pytest.mark.parametrize("text", [
    "[couplings]\ng = -1.0\n",
    'mode = "replica-eh"\n',
    'mode = "replica-eh"\n[replica]\nn_rep = 1\n',
    "[lattice]\nL = 2\n",
    '[lattice]\nboundary = "twisted"\n',
    "[sampling]\nn_bins = 0\n",
    "[sampling]\nbogus = 1\n",
    "extra = 1\n",
    "[lattice]\nL = 4.5\n",
    "[sampling]\nmeasure_G = 1\n",
    '[sampling]\nbeta_policy = "two"\n',
    'mode = "analyze"\n',
    'mode = "nonsense"\n',
    "this is not toml = = \n",
])
def test_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_open_small_lattice_allowed():
    assert parse_config('[lattice]\nL = 2\nboundary = "open"\n').lattice.L == (2,)


@given(
    L=st.lists(st.integers(3, 64), min_size=1, max_size=4),
    g=st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=5),
    seed=st.integers(0, 2**31),
    n_bins=st.integers(1, 1000),
    slice_average=st.booleans(),
    beta=st.one_of(st.none(), st.floats(0.01, 100)),
)
def test_serialize_roundtrip(L, g, seed, n_bins, slice_average, beta):
    base = RunConfig()
    cfg = base.replace(
        seed=seed,
        lattice=base.lattice.__class__(tuple(L), "periodic"),
        couplings=base.couplings.__class__(1.0, tuple(g)),
        sampling=base.sampling.__class__(beta=beta, n_bins=n_bins, slice_average=slice_average),
    )
    assert parse_config(serialize(cfg)) == cfg


def test_load_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('mode = "ed"\n[lattice]\nL = 2\nboundary = "open"\n')
    assert load_config(p).mode == "ed"
