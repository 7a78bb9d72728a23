"""Run configuration: a small TOML grammar with strict key checking.

Example::

    mode = "observables"          # observables | replica-eh | ed | analyze
    seed = 1
    workers = 1

    [lattice]
    L = [8, 12, 16]               # int or list
    boundary = "periodic"         # periodic | open

    [couplings]
    J = 1.0
    g = [2.9, 3.0, 3.1]           # float or list

    [sampling]
    # beta = 16.0                 # omit to use beta_policy
    beta_policy = "2L"            # "2L" or a float multiplier written as "<c>L"
    n_equil = 2000
    n_bins = 100
    bin_size = 100
    chains = 1
    checkpoint_every = 10
    measure_G = false
    slice_average = false

    [replica]
    n_rep = 4                     # required for mode = "replica-eh"

    [ed]
    h = 0.0
    n = 4

    [output]
    dir = "out"
    input = ""                    # CSV consumed by mode = "analyze"
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import toml

MODES = ("observables", "replica-eh", "ed", "analyze")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeCfg:
    L: tuple[int, ...] = (8,)
    boundary: str = "periodic"


@dataclass(frozen=True)
class CouplingsCfg:
    J: float = 1.0
    g: tuple[float, ...] = (3.0,)


@dataclass(frozen=True)
class SamplingCfg:
    beta: float | None = None
    beta_policy: str = "2L"
    n_equil: int = 1000
    n_bins: int = 100
    bin_size: int = 100
    chains: int = 1
    checkpoint_every: int = 10
    measure_G: bool = False
    slice_average: bool = False


@dataclass(frozen=True)
class ReplicaCfg:
    n_rep: int | None = None


@dataclass(frozen=True)
class EdCfg:
    h: float = 0.0
    n: int = 4


@dataclass(frozen=True)
class OutputCfg:
    dir: str = "out"
    input: str = ""


@dataclass(frozen=True)
class RunConfig:
    mode: str = "observables"
    seed: int = 0
    workers: int = 1
    lattice: LatticeCfg = field(default_factory=LatticeCfg)
    couplings: CouplingsCfg = field(default_factory=CouplingsCfg)
    sampling: SamplingCfg = field(default_factory=SamplingCfg)
    replica: ReplicaCfg = field(default_factory=ReplicaCfg)
    ed: EdCfg = field(default_factory=EdCfg)
    output: OutputCfg = field(default_factory=OutputCfg)

    def beta_for(self, L: int) -> float:
        if self.sampling.beta is not None:
            return float(self.sampling.beta)
        return _policy_factor(self.sampling.beta_policy) * L

    def replace(self, **changes) -> "RunConfig":
        from dataclasses import replace

        return replace(self, **changes)


_SECTIONS = {
    "lattice": LatticeCfg,
    "couplings": CouplingsCfg,
    "sampling": SamplingCfg,
    "replica": ReplicaCfg,
    "ed": EdCfg,
    "output": OutputCfg,
}
_TOP = ("mode", "seed", "workers")


def _policy_factor(policy: str) -> float:
    if not policy.endswith("L"):
        raise ConfigError(f"beta_policy must look like '2L', got {policy!r}")
    try:
        c = float(policy[:-1] or 1.0)
    except ValueError:
        raise ConfigError(f"beta_policy must look like '2L', got {policy!r}") from None
    if c <= 0:
        raise ConfigError("beta_policy factor must be positive")
    return c


def _as_tuple(value, kind, key):
    items = value if isinstance(value, list) else [value]
    out = []
    for v in items:
        if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"{key}: expected integer, got {v!r}")
        if kind is float and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{key}: expected number, got {v!r}")
        out.append(kind(v))
    if not out:
        raise ConfigError(f"{key}: empty list")
    return tuple(out)


def _coerce(cls, section: str, raw: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    kw = {}
    for key, value in raw.items():
        default = getattr(cls(), key)
        name = f"{section}.{key}"
        if isinstance(default, tuple):
            kw[key] = _as_tuple(value, type(default[0]), name)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{name}: expected boolean, got {value!r}")
            kw[key] = value
        elif isinstance(default, int) or key in ("n_rep",):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name}: expected integer, got {value!r}")
            kw[key] = value
        elif isinstance(default, float) or key in ("beta",):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name}: expected number, got {value!r}")
            kw[key] = float(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{name}: expected string, got {value!r}")
            kw[key] = value
    return cls(**kw)


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_TOP) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    kw = {}
    for key in _TOP:
        if key in data:
            v = data[key]
            if key == "mode":
                if v not in MODES:
                    raise ConfigError(f"mode must be one of {MODES}, got {v!r}")
            elif isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{key}: expected integer, got {v!r}")
            kw[key] = v
    for section, cls in _SECTIONS.items():
        raw = data.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{section}] must be a table")
        kw[section] = _coerce(cls, section, raw)
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.lattice.boundary not in ("periodic", "open"):
        raise ConfigError(f"lattice.boundary must be periodic or open, got {cfg.lattice.boundary!r}")
    for L in cfg.lattice.L:
        if L < 1:
            raise ConfigError(f"lattice.L must be >= 1, got {L}")
        if cfg.lattice.boundary == "periodic" and L < 3:
            raise ConfigError(f"periodic lattices need L >= 3, got {L}")
    if not cfg.couplings.J > 0:
        raise ConfigError("couplings.J must be positive")
    for g in cfg.couplings.g:
        if not g >= 0:
            raise ConfigError(f"couplings.g must be non-negative, got {g}")
    s = cfg.sampling
    if s.beta is not None and not s.beta > 0:
        raise ConfigError("sampling.beta must be positive")
    _policy_factor(s.beta_policy)
    for key in ("n_bins", "bin_size", "chains", "checkpoint_every"):
        if getattr(s, key) < 1:
            raise ConfigError(f"sampling.{key} must be >= 1")
    if s.n_equil < 0:
        raise ConfigError("sampling.n_equil must be >= 0")
    if cfg.mode == "replica-eh":
        if cfg.replica.n_rep is None:
            raise ConfigError("mode = 'replica-eh' requires [replica] n_rep")
    if cfg.replica.n_rep is not None and cfg.replica.n_rep < 2:
        raise ConfigError("replica.n_rep must be >= 2")
    if cfg.ed.n < 2:
        raise ConfigError("ed.n must be >= 2")
    if cfg.mode == "analyze" and not cfg.output.input:
        raise ConfigError("mode = 'analyze' requires [output] input")


def parse_config(text: str) -> RunConfig:
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return from_dict(data)


def to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    for section in _SECTIONS:
        d[section] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d[section].items() if v is not None}
    return d


def serialize(cfg: RunConfig) -> str:
    return toml.dumps(to_dict(cfg))


def load_config(path) -> RunConfig:
    from pathlib import Path

    return parse_config(Path(path).read_text(encoding="utf-8"))
