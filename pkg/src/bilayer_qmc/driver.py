"""Sweep orchestration, seeding, checkpoint/resume and result files."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ed as ed_mod
from . import estimators as est
from . import replica as rep
from .config import RunConfig
from .lattice import build_lattice
from .sse import CheckpointError, Couplings, SseConfig, equilibrate, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Task:
    L: int
    g: float
    chain: int

    @property
    def key(self) -> str:
        return f"L{self.L}_g{self.g!r}_c{self.chain}"


def chain_seed(master_seed: int, L: int, g: float, chain: int) -> np.random.SeedSequence:
    """Seed stream depending only on (master seed, L, g, chain index)."""
    digest = hashlib.sha256(f"{L}|{float(g)!r}|{chain}".encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence(master_seed, spawn_key=tuple(words))


def config_fingerprint(cfg: RunConfig) -> str:
    """Hash of everything that affects sampled bytes (not workers or paths)."""
    from .config import serialize

    neutral = cfg.replace(workers=1, output=type(cfg.output)())
    return hashlib.sha256(serialize(neutral).encode()).hexdigest()


def tasks_for(cfg: RunConfig) -> list[Task]:
    return [Task(L, g, c) for L in cfg.lattice.L for g in cfg.couplings.g for c in range(cfg.sampling.chains)]


def _new_chain(cfg: RunConfig, task: Task) -> SseConfig:
    lat = build_lattice(task.L, cfg.lattice.boundary)
    rng = np.random.Generator(np.random.PCG64(chain_seed(cfg.seed, task.L, task.g, task.chain)))
    couplings = Couplings(cfg.couplings.J, task.g)
    beta = cfg.beta_for(task.L)
    if cfg.mode == "replica-eh":
        return rep.build_manifold(lat, couplings, beta, cfg.replica.n_rep, rng=rng)
    return SseConfig(lat, couplings, beta, rng=rng)


def _sample_chunk(cfg: RunConfig, chain: SseConfig, n_bins: int) -> dict[str, np.ndarray]:
    s = cfg.sampling
    if cfg.mode == "replica-eh":
        corr = rep.sample_manifold(chain, n_bins, s.bin_size)
        return {"onsite": corr.onsite_bins, "Gk": corr.Gk_bins}
    scalars, G = est.sample(chain, n_bins, s.bin_size, measure_G=s.measure_G, slice_average=s.slice_average)
    return {"scalars": scalars, "G": G}


def run_task(cfg: RunConfig, task: Task, workdir: Path, stop_after_bins: int | None = None) -> dict | None:
    """Run (or resume) one chain. Returns accumulated bins, or None if stopped early.

    ``stop_after_bins`` simulates an interruption: the task checkpoints and
    returns once at least that many bins exist.
    """
    ckpt = workdir / "checkpoints" / f"{task.key}.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    fingerprint = config_fingerprint(cfg)
    if ckpt.exists():
        cls = rep.ReplicaManifold if cfg.mode == "replica-eh" else SseConfig
        chain, header, arrays = load_checkpoint(ckpt, with_extra=True, cls=cls)
        if header.get("config") != fingerprint:
            raise CheckpointError(f"{ckpt} was written by a different configuration")
        done = header["bins_done"]
        log.info("resuming %s at bin %d", task.key, done)
    else:
        chain = _new_chain(cfg, task)
        equilibrate(chain, cfg.sampling.n_equil)
        arrays, done = {}, 0
        save_checkpoint(ckpt, chain, {"bins_done": 0, "task": task.key, "config": fingerprint}, arrays)

    total = cfg.sampling.n_bins
    every = cfg.sampling.checkpoint_every
    while done < total:
        if stop_after_bins is not None and done >= stop_after_bins:
            return None
        chunk = min(every, total - done)
        new = _sample_chunk(cfg, chain, chunk)
        arrays = {k: (np.concatenate([arrays[k], v]) if k in arrays else v) for k, v in new.items()}
        done += chunk
        save_checkpoint(ckpt, chain, {"bins_done": done, "task": task.key, "config": fingerprint}, arrays)
    return {"task": task, "arrays": arrays, "M": chain.M}


def _run_task_star(args):
    return run_task(*args)


def _series_rows(cfg: RunConfig, L: int, g: float, results: list[dict]) -> list[dict]:
    scalars = est.merge_bins(*[r["arrays"]["scalars"] for r in results])
    G = est.merge_bins(*[r["arrays"]["G"] for r in results])
    lat = build_lattice(L, cfg.lattice.boundary)
    beta = cfg.beta_for(L)
    meta = {"L": L, "g": g, "beta": beta, "seed": cfg.seed}
    return est.series_from_samples(scalars, G, lat, Couplings(cfg.couplings.J, g), beta, meta).rows()


def run_sweep(cfg: RunConfig, out_dir: str | Path | None = None, workers: int | None = None,
              stop_after_bins: int | None = None) -> dict[str, Path]:
    """Run every (L, g, chain) task and write the result files.

    Output bytes depend only on the configuration and master seed, never on
    the worker count or on interruptions.
    """
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    tasks = tasks_for(cfg)
    results: dict[str, dict] = {}
    manifest = out / "manifest.json"
    try:
        if workers == 1:
            for t in tasks:
                r = run_task(cfg, t, out, stop_after_bins)
                if r is not None:
                    results[t.key] = r
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = {pool.submit(_run_task_star, (cfg, t, out, stop_after_bins)): t for t in tasks}
                for f in as_completed(futs):
                    r = f.result()
                    if r is not None:
                        results[futs[f].key] = r
    except OSError as exc:
        _write_manifest(manifest, tasks, results, status=f"failed: {exc}")
        raise
    if len(results) < len(tasks):
        _write_manifest(manifest, tasks, results, status="interrupted")
        return {"manifest": manifest}

    paths = {}
    if cfg.mode == "replica-eh":
        gk_parts, on_parts = [], []
        for L in cfg.lattice.L:
            for g in cfg.couplings.g:
                rs = [results[Task(L, g, c).key] for c in range(cfg.sampling.chains)]
                corr = rep.EhCorrelator(L, cfg.replica.n_rep,
                                        est.merge_bins(*[r["arrays"]["onsite"] for r in rs]),
                                        est.merge_bins(*[r["arrays"]["Gk"] for r in rs]))
                beta = cfg.beta_for(L)
                gk_parts.append(rep.momentum_csv(corr, g, beta))
                on_parts.append(rep.onsite_csv(corr, g, beta))
        paths["eh_momentum"] = out / "eh_momentum.csv"
        paths["eh_onsite"] = out / "eh_onsite.csv"
        paths["eh_momentum"].write_text(_join_csv(gk_parts))
        paths["eh_onsite"].write_text(_join_csv(on_parts))
    else:
        rows = []
        for L in cfg.lattice.L:
            for g in cfg.couplings.g:
                rs = [results[Task(L, g, c).key] for c in range(cfg.sampling.chains)]
                rows += _series_rows(cfg, L, g, rs)
        paths["csv"] = out / "observables.csv"
        paths["json"] = out / "observables.json"
        paths["csv"].write_text(est.rows_to_csv(rows))
        paths["json"].write_text(json.dumps(rows, sort_keys=True, indent=1))
    _write_manifest(manifest, tasks, results, status="complete")
    paths["manifest"] = manifest
    return paths


def _join_csv(parts: list[str]) -> str:
    head = parts[0].splitlines(keepends=True)[0]
    return head + "".join("".join(p.splitlines(keepends=True)[1:]) for p in parts)


def _write_manifest(path: Path, tasks: list[Task], results: dict, status: str) -> None:
    data = {
        "status": status,
        "completed": sorted(results),
        "pending": sorted(t.key for t in tasks if t.key not in results),
    }
    path.write_text(json.dumps(data, indent=1, sort_keys=True))


def run_ed(cfg: RunConfig) -> list[dict]:
    out = []
    for L in cfg.lattice.L:
        lat = build_lattice(L, cfg.lattice.boundary)
        for g in cfg.couplings.g:
            out.append(ed_mod.report_json(lat, Couplings(cfg.couplings.J, g), cfg.beta_for(L), cfg.ed.n, cfg.ed.h))
    return out
