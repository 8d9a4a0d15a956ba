"""Plain-text ``key=value`` configuration shared by every CLI subcommand.

Each key is also a ``--key`` flag; flags override the file, which overrides the
defaults below.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass
class Config:
    # data
    n: int = 512
    d: int = 32
    num_samples: int = 64
    # indexer / training
    d_h: int = 64
    steps: int = 2000
    lr_peak: float = 1e-3
    warmup: int = 100
    accumulation: int = 1
    eps: float = 1e-8
    kl_direction: str = "forward"
    slash_mapping: str = "reverse"
    # selection / kernels
    tau_v: float = 0.9
    tau_s: float = 0.9
    min_budget: int = 1
    block: int = 64
    # theory
    D: int = 8
    offsets: int = 64
    samples: int = 200_000
    # bench
    seeds: int = 5
    seed: int = 0


HELP = {
    "n": "sequence length of generated samples",
    "d": "head dimension (even, >= 4)",
    "num_samples": "number of samples written by gen",
    "d_h": "indexer hidden width",
    "steps": "optimizer steps",
    "lr_peak": "peak learning rate",
    "warmup": "linear warmup steps",
    "accumulation": "gradient accumulation micro-steps per optimizer step",
    "eps": "target smoothing inside the KL log",
    "kl_direction": "forward = KL(pred || target), reverse = KL(target || pred)",
    "slash_mapping": "token-to-offset map for slash logits: reverse (o = n-1-t) or identity",
    "tau_v": "cumulative mass threshold for vertical columns",
    "tau_s": "cumulative mass threshold for slash offsets",
    "min_budget": "minimum indices kept per direction",
    "block": "tile size of the streaming kernels",
    "D": "head dimension of the Gaussian model (theory)",
    "offsets": "theory checks offsets 0 .. offsets-1",
    "samples": "Monte Carlo draws (theory)",
    "seeds": "training seeds per ablation variant (bench)",
    "seed": "master random seed",
}

FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _coerce(key: str, raw: str):
    kind = type(getattr(Config(), key))
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        if key not in FIELDS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def load_config(path=None, overrides: dict | None = None) -> Config:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = raw if not isinstance(raw, str) else _coerce(key, raw)
    return Config(**values)


def dump_config(cfg: Config) -> str:
    return "".join(f"{k}={getattr(cfg, k)}\n" for k in FIELDS)
