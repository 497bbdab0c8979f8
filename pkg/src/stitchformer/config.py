"""Run configuration: defaults, a flat key=value file format, and validation.

Precedence is command-line flag > config file > ``STITCHFORMER_SEED`` (seed only) > default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .envs import ENVIRONMENTS
from .errors import UsageError

COMMANDS = ("gen-data", "train", "eval", "stitch-exp", "verify-theorem", "export-metrics")
SEED_ENV = "STITCHFORMER_SEED"


@dataclass
class RunConfig:
    command: str = "train"
    env: str = "chain"
    dataset: str = ""
    checkpoint: str = ""
    input: str = ""
    out: str = "runs/default"
    episodes: int = 500
    demos: int = 5
    conditioning: str = "LfD"
    lambda1: float = 1.0
    lambda2: float = 0.5
    norm: str = "L2"
    clip: float = 10.0
    z_dim: int = 16
    hidden: int = 64
    layers: int = 3
    heads: int = 2
    encoder_heads: int = 8
    dropout: float = 0.1
    context: int = 20
    batch_size: int = 64
    epochs: int = 20
    groups_per_epoch: int = 50
    lr: float = 1.2e-4
    weight_decay: float = 1e-4
    warmup_steps: int = 10000
    z_lr: float = 1e-2
    z_warmup_steps: int = 0
    seed: int = 0
    precision: str = "float32"
    threads: int = 1
    eval_episodes: int = 50
    eval_seed: int = 1000
    instances: int = 100
    sweep: str = ""

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def demo_counts(self) -> list:
        return [int(v) for v in self.sweep.split(",") if v.strip()] if self.sweep else []


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def coerce(key: str, value) -> object:
    key = key.replace("-", "_")
    if key not in FIELD_TYPES:
        raise UsageError(f"unknown configuration key {key!r}", field=key)
    kind = FIELD_TYPES[key]
    if isinstance(value, _CASTS[kind]) and not isinstance(value, bool):
        return value
    try:
        return _CASTS[kind](str(value).strip())
    except ValueError:
        raise UsageError(f"{key} expects {kind}, got {value!r}", field=key) from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path} does not exist", field="config")
    out = {}
    for n, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value', got {raw!r}", field="config")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = coerce(key, value)
    return out


def resolve(flags: dict, config_file=None, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values = {}
    if SEED_ENV in environ:
        values["seed"] = coerce("seed", environ[SEED_ENV])
    if config_file:
        values.update(read_config_file(config_file))
    values.update({k.replace("-", "_"): coerce(k, v) for k, v in flags.items() if v is not None})
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    def need(ok, field, msg):
        if not ok:
            raise UsageError(f"{field}: {msg}", field=field)

    need(cfg.command in COMMANDS, "command", f"must be one of {COMMANDS}")
    need(cfg.env in ENVIRONMENTS, "env", f"must be one of {sorted(ENVIRONMENTS)}")
    need(cfg.conditioning in ("LfD", "LfO"), "conditioning", "must be LfD or LfO")
    need(cfg.norm in ("L1", "L2"), "norm", "must be L1 or L2")
    need(cfg.precision in ("float32", "float64"), "precision", "must be float32 or float64")
    need(cfg.lambda1 > 0, "lambda1", "must be > 0")
    need(cfg.lambda2 >= 0, "lambda2", "must be >= 0")
    need(cfg.clip > 0, "clip", "must be > 0")
    need(0.0 <= cfg.dropout < 1.0, "dropout", "must lie in [0, 1)")
    for name in ("z_dim", "hidden", "layers", "heads", "encoder_heads", "context", "batch_size",
                 "groups_per_epoch", "episodes", "demos", "threads", "eval_episodes", "instances"):
        need(getattr(cfg, name) >= 1, name, "must be >= 1")
    for name in ("epochs", "warmup_steps", "z_warmup_steps", "seed", "eval_seed"):
        need(getattr(cfg, name) >= 0, name, "must be >= 0")
    for name in ("lr", "z_lr"):
        need(getattr(cfg, name) > 0, name, "must be > 0")
    need(cfg.weight_decay >= 0, "weight_decay", "must be >= 0")
    need(cfg.hidden % cfg.heads == 0, "heads", "must divide hidden")
    need(cfg.hidden % cfg.encoder_heads == 0, "encoder_heads", "must divide hidden")
    try:
        counts = cfg.demo_counts()
    except ValueError:
        raise UsageError("sweep: expected comma-separated integers", field="sweep") from None
    need(all(c >= 1 for c in counts), "sweep", "demo counts must be >= 1")
