"""Flat ``key = value`` config files and the config dataclasses that use them.

Lines starting with ``#`` are comments.  Unknown keys are rejected so typos
surface immediately.  Tuple-valued keys take comma-separated values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key, value: str, default):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = [v.strip() for v in value.split(",") if v.strip()]
            if default:
                return tuple(type(default[0])(v) for v in items)
            return tuple(_guess(v) for v in items)
        if default is None:
            return None if value.lower() in ("", "none", "null") else value
        return value
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def _guess(value: str):
    for kind in (int, float):
        try:
            return kind(value)
        except ValueError:
            pass
    return value


def from_mapping(cls, mapping: dict, base=None):
    """Build ``cls`` from string values, starting from ``base`` (or defaults)."""
    base = base if base is not None else cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    updates = {}
    for key, value in mapping.items():
        default = getattr(base, key)
        updates[key] = _coerce(key, value, default) if isinstance(value, str) else value
    obj = dataclasses.replace(base, **updates)
    validate = getattr(obj, "validate", None)
    if validate:
        validate()
    return obj


def load_config(cls, path):
    return from_mapping(cls, parse_kv(Path(path).read_text(encoding="utf-8")))


def dump_config(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        elif value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


MODEL_KINDS = ("indep", "inter-ec", "inter-ce")


@dataclass(frozen=True)
class TrainConfig:
    model: str = "indep"
    bound: bool = False
    lam: float = 0.5
    batch_size: int = 32
    lr: float = 0.005
    epochs: int = 20
    seed: int = 0
    d_w: int = 200
    hidden: int = 100
    d_att: int = 100
    d_lab: int = 50
    max_len: int = 30
    max_clauses: int = 75
    keep_prob: float = 0.8
    l2: float = 1e-5
    soft_labels: bool = False
    train_embeddings: bool = True
    min_count: int = 1
    dtype: str = "float32"

    def validate(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must be in [0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError("keep_prob must be in (0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        for name in ("d_w", "hidden", "d_att", "d_lab", "max_len", "max_clauses"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass(frozen=True)
class FilterConfig:
    source: str = "gold"
    k: int = 10
    threshold: float = 0.5
    l2: float = 1e-5
    lr: float = 0.05
    iterations: int = 500
    balance: bool = False
    seed: int = 0

    def validate(self):
        if self.source not in ("gold", "predicted"):
            raise ConfigError("filter source must be 'gold' or 'predicted'")
        if self.k < 0:
            raise ConfigError("filter k must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("filter threshold must be in (0, 1)")


@dataclass(frozen=True)
class ExperimentConfig(TrainConfig):
    filter_source: str = "gold"
    filter_k: int = 10
    filter_threshold: float = 0.5
    filter_l2: float = 1e-5
    filter_lr: float = 0.05
    filter_iterations: int = 500
    filter_balance: bool = False
    train_ratio: float = 0.9
    n_runs: int = 20
    base_seed: int = 0
    corpus: str = ""
    embeddings: str = ""
    random_embeddings: bool = False
    output_dir: str = ""

    def validate(self):
        super().validate()
        self.filter_config(0).validate()
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if not 0.0 < self.train_ratio <= 1.0:
            raise ConfigError("train_ratio must be in (0, 1]")

    def train_config(self, seed: int) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        values = {n: getattr(self, n) for n in names}
        values["seed"] = seed
        return TrainConfig(**values)

    def filter_config(self, seed: int) -> FilterConfig:
        return FilterConfig(
            source=self.filter_source, k=self.filter_k, threshold=self.filter_threshold,
            l2=self.filter_l2, lr=self.filter_lr, iterations=self.filter_iterations,
            balance=self.filter_balance, seed=seed,
        )
