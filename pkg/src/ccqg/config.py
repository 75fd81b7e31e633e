"""Flat key = value pipeline configuration shared by every subcommand.

A config file holds one `key = value` pair per line; `#` starts a
comment. Command-line overrides use the same keys. The field `lam` is
spelled `lambda` in files and flags.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .estimator import DEFAULT_LAMBDA
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """A config key is missing, unknown, or holds an unusable value."""


@dataclass
class PipelineConfig:
    # paths and artifact locations
    corpus: str = ""
    format: str = "squad"
    annotations: str = ""
    normalizer: str = ""
    checkpoint: str = ""
    vocab: str = ""
    banks: str = ""
    train_instances: str = ""
    dev_instances: str = ""
    input: str = ""
    generated: str = ""
    references: str = ""
    generated_simple: str = ""
    generated_complex: str = ""
    output_dir: str = ""
    # estimator
    lam: float = DEFAULT_LAMBDA
    f3_mode: str = "inverse"
    alpha: float = 0.01
    # generator architecture
    n_z: int = 3
    n_pi: int = 12
    top_k: int = 4
    d_complexity: int = 30
    d_expert: int = 50
    d_template: int = 50
    hidden: int = 256
    d_word: int = 128
    max_decode_len: int = 30
    use_moe: bool = True
    use_templates: bool = True
    length_normalize: bool = False
    # training
    lr: float = 0.001
    convergence_eps: float = 1e-6
    max_epochs: int = 30
    batch_size: int = 1
    seed: int = 0
    embedding_source: str = "internal"
    vectors_path: str = ""
    kmeans_restarts: int = 4
    kmeans_max_iter: int = 100
    freeze_templates: bool = False
    # misc
    max_vocab: int = 20000
    complexity: str = "complex"
    threads: int = 1


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_ALIASES = {"lambda": "lam"}


def config_keys() -> list[str]:
    keys = [name for name in _FIELD_TYPES if name != "lam"]
    return sorted(keys + ["lambda"])


def _coerce(key: str, field: str, raw: str):
    kind = _FIELD_TYPES[field]
    try:
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}")


def parse_pairs(pairs: Mapping[str, str]) -> PipelineConfig:
    config = PipelineConfig()
    for key, raw in pairs.items():
        field = _ALIASES.get(key, key)
        if field not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, field, _coerce(key, field, raw))
    return config


def read_config_file(path: str | Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def apply_overrides(config: PipelineConfig,
                    overrides: Mapping[str, str]) -> PipelineConfig:
    for key, raw in overrides.items():
        field = _ALIASES.get(key, key)
        if field not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, field, _coerce(key, field, raw))
    return config


def require(config: PipelineConfig, command: str, *keys: str) -> None:
    for key in keys:
        field = _ALIASES.get(key, key)
        if not getattr(config, field):
            raise ConfigError(f"{command}: missing config key {key!r}")


def model_config(config: PipelineConfig) -> ModelConfig:
    return ModelConfig(
        n_z=config.n_z, n_pi=config.n_pi, top_k=config.top_k,
        d_complexity=config.d_complexity, d_expert=config.d_expert,
        d_template=config.d_template, hidden=config.hidden,
        d_word=config.d_word, max_decode_len=config.max_decode_len,
        use_moe=config.use_moe, use_templates=config.use_templates,
        length_normalize=config.length_normalize,
    )


def train_config(config: PipelineConfig) -> TrainConfig:
    return TrainConfig(
        lr=config.lr, convergence_eps=config.convergence_eps,
        max_epochs=config.max_epochs, batch_size=config.batch_size,
        seed=config.seed, embedding_source=config.embedding_source,
        vectors_path=config.vectors_path or None,
        kmeans_restarts=config.kmeans_restarts,
        kmeans_max_iter=config.kmeans_max_iter,
        freeze_templates=config.freeze_templates,
    )
