"""Run configuration: a flat TOML file overlaid by command-line flags.

Only top-level ``key = value`` pairs are accepted (no tables). Example::

    # model
    d_embed = 64
    attention_scaling = false
    # training
    epochs = 100
    lr = 1e-3
    seed = 3
    # miner
    max_path_width = 2

Unknown keys, wrong types and out-of-range values raise ConfigError naming
the offending field.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .model import ModelConfig
from .paths import DEFAULT_MAX_CONTEXTS, DEFAULT_MAX_PATH_LENGTH, DEFAULT_MAX_PATH_WIDTH
from .train import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class CliConfig:
    # model
    d_embed: int = 64
    n_heads: int = 4
    conv_kernel_size: int = 3
    dropout_rate: float = 0.1
    attention_scaling: bool = False
    # training
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    train_ratio: int = 4
    val_ratio: int = 1
    early_stop_patience: int = 15
    early_stop_min_delta: float = 1e-4
    seed: int = 0
    # miner and vocabulary
    max_path_length: int = DEFAULT_MAX_PATH_LENGTH
    max_path_width: int = DEFAULT_MAX_PATH_WIDTH
    max_contexts: int = DEFAULT_MAX_CONTEXTS
    max_node_vocab: int = 10_000
    max_path_vocab: int = 50_000
    # evaluation / explanation
    threshold: float | None = None
    format: str = "ansi"
    # files
    corpus: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    manifest: str | None = None

    def validate(self) -> "CliConfig":
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        for name in ("d_embed", "n_heads", "conv_kernel_size", "epochs", "batch_size",
                     "train_ratio"):
            need(getattr(self, name) >= 1, name, "must be >= 1")
        for name in ("val_ratio", "early_stop_patience", "max_path_length", "max_path_width",
                     "max_contexts", "max_node_vocab", "max_path_vocab", "seed"):
            need(getattr(self, name) >= 0, name, "must be >= 0")
        need(self.conv_kernel_size % 2 == 1, "conv_kernel_size", "must be odd")
        need((3 * self.d_embed) % self.n_heads == 0, "n_heads",
             f"must divide 3*d_embed = {3 * self.d_embed}")
        need(0.0 <= self.dropout_rate < 1.0, "dropout_rate", "must lie in [0, 1)")
        need(self.lr >= 0.0, "lr", "must be >= 0")
        need(0.0 <= self.beta1 < 1.0, "beta1", "must lie in [0, 1)")
        need(0.0 <= self.beta2 < 1.0, "beta2", "must lie in [0, 1)")
        need(self.eps > 0.0, "eps", "must be > 0")
        need(self.early_stop_min_delta >= 0.0, "early_stop_min_delta", "must be >= 0")
        need(self.threshold is None or 0.0 < self.threshold < 1.0, "threshold",
             "must lie in (0, 1)")
        need(self.format in ("html", "ansi"), "format", "must be 'html' or 'ansi'")
        return self

    def model_config(self) -> ModelConfig:
        return ModelConfig(d_embed=self.d_embed, n_heads=self.n_heads,
                           conv_kernel_size=self.conv_kernel_size,
                           dropout_rate=self.dropout_rate, max_contexts=self.max_contexts,
                           attention_scaling=self.attention_scaling, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.lr, beta1=self.beta1, beta2=self.beta2,
                           eps=self.eps, split_ratio=(self.train_ratio, self.val_ratio),
                           seed=self.seed, early_stop_patience=self.early_stop_patience or None,
                           early_stop_min_delta=self.early_stop_min_delta)

    def miner(self) -> dict:
        return {"max_path_length": self.max_path_length, "max_path_width": self.max_path_width,
                "max_contexts": self.max_contexts, "subsample_seed": self.seed}


FIELD_TYPES = {f.name: f.type for f in fields(CliConfig)}


def _coerce(name: str, value):
    kind = FIELD_TYPES[name]
    if "bool" in kind:
        if not isinstance(value, bool):
            raise ConfigError(name, f"expected true/false, got {value!r}")
        return value
    if kind.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return value
    if kind.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(name, f"expected a string, got {value!r}")
    return value


def parse_config_text(text: str) -> dict:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid syntax: {exc}") from exc
    out = {}
    for key, value in doc.items():
        if key not in FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key")
        if isinstance(value, dict):
            raise ConfigError(key, "nested tables are not allowed")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> CliConfig:
    """File values first, then non-None ``overrides``; validated before return."""
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key")
        values[key] = _coerce(key, value)
    return replace(CliConfig(), **values).validate()
