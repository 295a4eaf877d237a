"""Dataclass configuration for experiments, with file loading and defaulting.

The experiment file is JSON. Every field has a default matching the standard
hyperparameters; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import InvalidInputError


@dataclass
class OptimizerConfig:
    """Decoupled-weight-decay Adam settings."""

    weight_decay: float = 0.02
    beta1: float = 0.99
    beta2: float = 0.98
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise InvalidInputError("betas must lie strictly between 0 and 1")


@dataclass
class TrainConfig:
    """Hyperparameters shared by every client."""

    # Class-similarity softmax temperature. The CLIP logit-scale convention
    # would be ~0.01, but that saturates the adapter head so badly that its
    # entropy (and with it the ensemble balance) collapses; 0.2 keeps the
    # confidence signal informative. Override per experiment as needed.
    tau: float = 0.2
    kl_temperature: float = 2.0
    lam: float = 0.04              # consistency term weight
    batch_size: int = 32
    lr_adapter: float = 5e-4
    lr_classifier: float = 1e-3
    scheduler_gamma: float = 0.97
    hidden_dim: int = 256
    mask_window: float = 1.0
    mask_adapter: bool = True
    reset_adapter_optimizer: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)


@dataclass
class SyntheticSpec:
    """Parameters of the built-in heterogeneous data generator."""

    clients: int = 3
    dim: int = 32
    classes: int = 4
    n_per_client: int = 200
    shift: str = "rotation"        # rotation | scaling | none
    sigma: float = 0.15
    n_global: int | None = None


@dataclass
class ExperimentConfig:
    """Full description of one simulator run."""

    bank_paths: list[str] = field(default_factory=list)
    global_bank_path: str | None = None
    synthetic: SyntheticSpec | None = None
    rounds: int = 30
    seed: int = 0
    threads: int = 1
    compression: bool = True
    out_dir: str = "results"
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"split fractions sum to {total}, expected 1")
        if self.rounds < 0:
            raise InvalidInputError("rounds must be nonnegative")
        if self.threads < 1:
            raise InvalidInputError("threads must be at least 1")
        if not self.bank_paths and self.synthetic is None:
            raise InvalidInputError("config needs either 'banks' or 'synthetic'")


# JSON keys are user-facing; a few differ from field names ("lambda" is a
# Python keyword).
_TRAIN_KEYS = {
    "tau": "tau",
    "kl_temperature": "kl_temperature",
    "lambda": "lam",
    "batch_size": "batch_size",
    "lr_adapter": "lr_adapter",
    "lr_classifier": "lr_classifier",
    "scheduler_gamma": "scheduler_gamma",
    "hidden_dim": "hidden_dim",
    "mask_window": "mask_window",
    "mask_adapter": "mask_adapter",
    "reset_adapter_optimizer": "reset_adapter_optimizer",
}
_OPT_KEYS = {"weight_decay", "beta1", "beta2", "eps"}
_TOP_KEYS = {
    "banks": "bank_paths",
    "global_bank": "global_bank_path",
    "rounds": "rounds",
    "seed": "seed",
    "threads": "threads",
    "compression": "compression",
    "out_dir": "out_dir",
    "train_fraction": "train_fraction",
    "val_fraction": "val_fraction",
    "test_fraction": "test_fraction",
}
_SYNTH_KEYS = {f.name for f in dataclasses.fields(SyntheticSpec)}


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed JSON, rejecting unknown keys."""
    train_kwargs: dict[str, Any] = {}
    opt_kwargs: dict[str, Any] = {}
    top_kwargs: dict[str, Any] = {}
    synthetic = None
    for key, value in raw.items():
        if key in _TRAIN_KEYS:
            train_kwargs[_TRAIN_KEYS[key]] = value
        elif key in _OPT_KEYS:
            opt_kwargs[key] = value
        elif key in _TOP_KEYS:
            top_kwargs[_TOP_KEYS[key]] = value
        elif key == "synthetic":
            unknown = set(value) - _SYNTH_KEYS
            if unknown:
                raise InvalidInputError(
                    f"unknown synthetic key(s): {', '.join(sorted(unknown))}"
                )
            synthetic = SyntheticSpec(**value)
        else:
            raise InvalidInputError(f"unknown config key: {key}")
    train = TrainConfig(optimizer=OptimizerConfig(**opt_kwargs), **train_kwargs)
    return ExperimentConfig(synthetic=synthetic, train=train, **top_kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidInputError("config root must be a JSON object")
    cfg = config_from_dict(raw)
    for bank in cfg.bank_paths:
        if not Path(bank).exists():
            raise InvalidInputError(f"banks: path does not exist: {bank}")
    if cfg.global_bank_path and not Path(cfg.global_bank_path).exists():
        raise InvalidInputError(
            f"global_bank: path does not exist: {cfg.global_bank_path}"
        )
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Inverse of config_from_dict, for echoing the resolved configuration."""
    out: dict[str, Any] = {
        "banks": list(cfg.bank_paths),
        "global_bank": cfg.global_bank_path,
        "rounds": cfg.rounds,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "compression": cfg.compression,
        "out_dir": cfg.out_dir,
        "train_fraction": cfg.train_fraction,
        "val_fraction": cfg.val_fraction,
        "test_fraction": cfg.test_fraction,
    }
    if cfg.synthetic is not None:
        out["synthetic"] = dataclasses.asdict(cfg.synthetic)
    for json_key, attr in _TRAIN_KEYS.items():
        out[json_key] = getattr(cfg.train, attr)
    for key in sorted(_OPT_KEYS):
        out[key] = getattr(cfg.train.optimizer, key)
    return out
