"""Plain-text run configuration shared by every command.

The file format is one ``key = value`` per line; ``#`` starts a comment.
Unknown keys are an error. Every artifact records :meth:`RunConfig.hash`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # corpus
    repo_depth: int = 1
    min_lines: int = 3
    split_train: float = 0.8
    split_valid: float = 0.1
    split_test: float = 0.1
    # snippet mining and transforms
    max_snippet_lines: int = 6
    samples_cap: int = 8
    transform: str = "adaptive"  # adaptive | mlm | dobf
    mlm_fraction: float = 0.8
    prioritize: bool = False
    budget: int = 1024
    # tokenizer
    vocab_size: int = 8000
    # model and training
    preset: str = "desk"
    variant: str = "uni"  # uni | parallel
    max_src_len: int = 1024
    max_tgt_len: int = 128
    lr: float = 1e-3
    batch_size: int = 32
    max_steps: int = 2000
    eval_every: int = 200
    patience: int = 5
    warmup: int = 100
    # inference
    beam_width: int = 1
    confidence_floor: float = 0.0

    def __post_init__(self):
        if self.transform not in ("adaptive", "mlm", "dobf"):
            raise ConfigError(f"transform must be adaptive, mlm or dobf, not {self.transform!r}")
        if self.variant not in ("uni", "parallel"):
            raise ConfigError(f"variant must be uni or parallel, not {self.variant!r}")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigError("confidence_floor must lie in [0, 1]")

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_valid, self.split_test)

    def canonical(self) -> str:
        return "".join(f"{f.name} = {_render(getattr(self, f.name))}\n" for f in fields(self))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def header(self) -> dict:
        return {"config_hash": self.hash(), "seed": self.seed}

    def with_overrides(self, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = raw if not isinstance(raw, str) else _parse(key, raw, getattr(self, key))
        return replace(self, **parsed)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"line {n}: duplicate key {key!r}")
            values[key] = value
        return cls().with_overrides(values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw
