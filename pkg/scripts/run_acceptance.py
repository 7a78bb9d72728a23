"""Produce the Monte Carlo data behind the acceptance checks.

Each config in configs/acceptance/ is run into results/acceptance/<name>/.
Finished chains are checkpointed, so rerunning is cheap and gives identical
files. ``tests/test_acceptance.py`` reads the same directories.

    python scripts/run_acceptance.py [name ...]
"""

import argparse
import logging
import time
from pathlib import Path

from bilayer_qmc.config import load_config
from bilayer_qmc.driver import run_sweep

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs" / "acceptance"
RESULTS = ROOT / "results" / "acceptance"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems, default all")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    paths = sorted(CONFIGS.glob("*.toml"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    for path in paths:
        t0 = time.time()
        out = run_sweep(load_config(path), RESULTS / path.stem, workers=args.workers)
        print(f"{path.stem}: {time.time() - t0:.0f}s -> {out['manifest'].parent}", flush=True)


if __name__ == "__main__":
    main()
