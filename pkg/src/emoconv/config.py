"""Training configuration and the key=value config-file loader."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass
class TrainConfig:
    lr: float = 0.0005
    batch_size: int = 64
    epochs: int = 6
    clip_norm: float = 5.0
    anneal_factor: float = 0.2
    anneal_after_epoch: int = 5
    freeze_embedding_epochs: int = 2
    dropout_bilstm: float = 0.5
    dropout_linear: float = 0.7
    hidden_size: int = 200
    num_layers: int = 2
    seed: int = 0
    sentence_dim: int = 2304
    embedding_dim: int = 100
    # the projection before max-pooling is purely linear by default; this
    # flag switches in a tanh for comparison runs
    projection_tanh: bool = False

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        for name in ("batch_size", "hidden_size", "num_layers", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("dropout_bilstm", "dropout_linear"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if not 0.0 < self.anneal_factor <= 1.0:
            raise ValueError(f"anneal_factor must be in (0, 1], got {self.anneal_factor}")
        if self.anneal_after_epoch < 0 or self.freeze_embedding_epochs < 0:
            raise ValueError("epoch thresholds must be >= 0")
        if self.sentence_dim < 0:
            raise ValueError(f"sentence_dim must be >= 0, got {self.sentence_dim}")
        return self

    def replace(self, **kwargs) -> "TrainConfig":
        return dataclasses.replace(self, **kwargs).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(raw)
    if kind == "int":
        return int(raw)
    return float(raw)


def parse_config_lines(lines, defaults: TrainConfig | None = None,
                       where: str = "<config>") -> TrainConfig:
    overrides = {}
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{where} line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{where} line {lineno}: unknown config key {key!r}")
        try:
            overrides[key] = _parse_value(key, raw)
        except ValueError:
            raise ValueError(f"{where} line {lineno}: cannot parse value {raw!r} "
                             f"for key {key!r}") from None
    base = defaults if defaults is not None else TrainConfig()
    return dataclasses.replace(base, **overrides).validate()


def load_config(path) -> TrainConfig:
    """Read a key=value config file; unspecified keys keep their defaults."""
    with open(path, encoding="utf-8") as fh:
        return parse_config_lines(fh, where=str(path))
