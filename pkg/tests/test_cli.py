import json
import subprocess
import sys

from bilayer_qmc.cli import main

OBS = """
seed = 1
[lattice]
L = [3, 4]
[couplings]
g = [2.0, 3.0, 4.0, 5.0]
[sampling]
n_equil = 20
n_bins = 10
bin_size = 10
"""

EH = """
mode = "replica-eh"
[lattice]
L = 3
[couplings]
g = 3.0
[sampling]
beta = 2.0
n_equil = 10
n_bins = 3
bin_size = 3
[replica]
n_rep = 2
"""

ED = """
[lattice]
L = 2
boundary = "open"
[couplings]
g = 3.0
[sampling]
beta = 8.0
[ed]
n = 4
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_sweep_then_analyze_and_collapse(tmp_path, capsys):
    cfg = write(tmp_path, "obs.toml", OBS)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "sw")]) == 0
    csv_path = tmp_path / "sw" / "observables.csv"
    assert csv_path.exists()
    capsys.readouterr()
    code = main(["analyze", "--in", str(csv_path), "--out", str(tmp_path / "report.json")])
    if code == 0:
        report = json.loads((tmp_path / "report.json").read_text())
        assert "crossings" in report
    else:
        # tiny noisy runs may not cross; the failure must still be machine readable
        assert last_error(capsys)["error"] == "NoCrossingError"
    code = main(["collapse", "--in", str(csv_path), "--gc", "3.0", "--csv", str(tmp_path / "c.csv"),
                 "--out", str(tmp_path / "c.json")])
    assert code == 0
    assert "U2" in json.loads((tmp_path / "c.json").read_text())["cost"]


def test_run_requires_single_point(tmp_path, capsys):
    cfg = write(tmp_path, "obs.toml", OBS)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


def test_run_single_point(tmp_path):
    single = OBS.replace("L = [3, 4]", "L = 3").replace("g = [2.0, 3.0, 4.0, 5.0]", "g = 3.0")
    cfg = write(tmp_path, "one.toml", single)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r"), "--seed", "9"]) == 0
    assert "L,g,beta,seed" in (tmp_path / "r" / "observables.csv").read_text()
    assert ",9," in (tmp_path / "r" / "observables.csv").read_text()


def test_replica_eh(tmp_path):
    cfg = write(tmp_path, "eh.toml", EH)
    assert main(["replica-eh", "--config", cfg, "--out", str(tmp_path / "eh")]) == 0
    head = (tmp_path / "eh" / "eh_momentum.csv").read_text().splitlines()[0]
    assert head == "L,g,beta,n_rep,k_m,k_n,tau,G,error"


def test_replica_eh_needs_n_rep(tmp_path, capsys):
    cfg = write(tmp_path, "bad.toml", OBS)
    assert main(["replica-eh", "--config", cfg]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


def test_ed_prints_report(tmp_path, capsys):
    cfg = write(tmp_path, "ed.toml", ED)
    assert main(["ed", "--config", cfg]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n"] == 4
    assert report["diagonality_defect"] < 1e-12


def test_missing_config_file(capsys):
    assert main(["sweep", "--config", "/nonexistent/x.toml"]) == 2
    assert last_error(capsys)["error"] == "FileNotFoundError"


def test_bad_arguments(capsys):
    assert main(["frobnicate"]) == 2
    assert last_error(capsys)["error"] == "UsageError"


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "bilayer_qmc.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("run", "sweep", "replica-eh", "ed", "analyze", "collapse"):
        assert sub in out.stdout
