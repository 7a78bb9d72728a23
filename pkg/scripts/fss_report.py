"""Crossings, g_c extrapolation and collapse costs for an observables CSV.

    python scripts/fss_report.py results/acceptance/c2_critical/observables.csv [--csv collapse.csv]
"""

import argparse
import json
from pathlib import Path

from bilayer_qmc.estimators import read_csv_rows
from bilayer_qmc.fss import NU_3D_ISING, CollapseParams, SweepDataset, analyze, collapse_cost, collapse_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("--csv-out", dest="csv_out")
    args = ap.parse_args()
    rows = read_csv_rows(Path(args.csv).read_text())
    report = analyze(rows)
    gc = report["g_c"]
    ds = SweepDataset.from_rows(rows)
    report["collapse"] = {
        name: {str(nu): collapse_cost(ds, CollapseParams(gc, nu), name) for nu in (0.5, NU_3D_ISING, 0.8, 1.0)}
        for name in ("U2", "chi")
    }
    print(json.dumps(report, indent=1, sort_keys=True))
    if args.csv_out:
        Path(args.csv_out).write_text(collapse_csv(ds, CollapseParams(gc)))


if __name__ == "__main__":
    main()
