"""Compare beta = 2L and beta = 4L estimates at g = 3.05 for every size.

chi carries an explicit factor beta, so chi / beta is compared instead.

    python scripts/beta_check.py
"""

from pathlib import Path

from bilayer_qmc.config import load_config
from bilayer_qmc.driver import run_sweep
from bilayer_qmc.estimators import read_csv_rows

ROOT = Path(__file__).resolve().parents[1]


def table(stem, cfg_dir):
    cfg = load_config(ROOT / "configs" / cfg_dir / f"{stem}.toml")
    paths = run_sweep(cfg, ROOT / "results" / cfg_dir / stem)
    return {(r["L"], r["g"], r["observable"]): r for r in read_csv_rows(paths["csv"].read_text())}


def main():
    short = table("c2_critical", "acceptance")
    long = table("beta_doubling", "checks")
    print(f"{'L':>3} {'obs':>6} {'beta=2L':>18} {'beta=4L':>18} {'diff/sigma':>10}")
    for (L, g, name), r in sorted(long.items()):
        if name not in ("U2", "m2", "chi"):
            continue
        s = short[(L, g, name)]
        a, ea = s["mean"], s["error"]
        b, eb = r["mean"], r["error"]
        if name == "chi":
            name = "chi/b"
            a, ea = a / s["beta"], ea / s["beta"]
            b, eb = b / r["beta"], eb / r["beta"]
        z = (b - a) / (ea ** 2 + eb ** 2) ** 0.5
        print(f"{L:3d} {name:>6} {a:10.5f}+-{ea:.5f} {b:10.5f}+-{eb:.5f} {z:10.2f}")


if __name__ == "__main__":
    main()
