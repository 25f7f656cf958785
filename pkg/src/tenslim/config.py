"""Pipeline configuration: one JSON document, strictly validated.

Unknown keys are errors and name the offending key.  A master seed fans
out to per-layer and data-order sub-seeds by stable hashing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .decompose import FORMATS, DecomposeConfig
from .errors import ConfigError
from .lrs import MODES
from .prune import PruneSchedule
from .train import DistillConfig

_COMPRESS_DEFAULTS = {
    "format": "tt",
    "budget_fraction": 0.10,
    "mode": "additive",
    "init": None,            # residual | masked; default follows mode
    "top_k_fraction": None,  # default 1 - prune.target_sparsity
    "fold_shape": None,
    "max_als_iters": 100,
    "als_tol": 1e-6,
    "masked_iters": 10,
    "strict_budget": False,
}

_PRUNE_DEFAULTS = {"target_sparsity": 0.8, "total_steps": 50}

_TRAIN_DEFAULTS = {
    "alpha": 0.9, "temperature": 3.0, "epochs": 50, "batch_size": 32,
    "base_lr": 0.1, "momentum": 0.9, "decay_factor": 0.7,
    "decay_every_epochs": 5,
}

_DATA_DEFAULTS = {"dataset": "digits", "train_size": None}

_ARCH_DEFAULTS = {"height": 8, "width": 8, "in_channels": 1,
                  "conv_channels": 8, "kernel": 3, "hidden": 32,
                  "classes": 10}

_TOP_DEFAULTS = {"seed": 0, "dtype": "f32"}


def _merge(section: str, defaults: dict, given: dict) -> dict:
    out = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {section}.{key!r}")
        out[key] = value
    return out


@dataclass
class PipelineConfig:
    seed: int = 0
    dtype: str = "f32"
    compress: dict = field(default_factory=lambda: dict(_COMPRESS_DEFAULTS))
    layers: dict = field(default_factory=dict)
    prune: dict = field(default_factory=lambda: dict(_PRUNE_DEFAULTS))
    train: dict = field(default_factory=lambda: dict(_TRAIN_DEFAULTS))
    data: dict = field(default_factory=lambda: dict(_DATA_DEFAULTS))
    arch: dict = field(default_factory=lambda: dict(_ARCH_DEFAULTS))

    def layer_settings(self, name: str) -> dict:
        """Effective compression settings for one layer."""
        settings = dict(self.compress)
        overrides = self.layers.get(name, {})
        settings.update(overrides)
        if settings["init"] is None:
            settings["init"] = ("masked" if settings["mode"] == "masking"
                                else "residual")
        if settings["top_k_fraction"] is None:
            settings["top_k_fraction"] = 1.0 - self.prune["target_sparsity"]
        return settings

    def decompose_config(self, name: str) -> DecomposeConfig:
        s = self.layer_settings(name)
        fold = s["fold_shape"]
        if fold is not None:
            fold = (tuple(tuple(x) for x in fold) if s["format"] == "ttm"
                    else tuple(fold))
        return DecomposeConfig(
            format=s["format"], budget_fraction=s["budget_fraction"],
            max_als_iters=s["max_als_iters"], als_tol=s["als_tol"],
            fold_shape=fold, masked_iters=s["masked_iters"],
            seed=layer_seed(self.seed, name),
            strict_budget=s["strict_budget"])

    def prune_schedule(self) -> PruneSchedule:
        return PruneSchedule(self.prune["target_sparsity"],
                             self.prune["total_steps"])

    def distill_config(self) -> DistillConfig:
        return DistillConfig(**self.train)

    def to_dict(self) -> dict:
        return asdict(self)


def layer_seed(master: int, name: str) -> int:
    digest = hashlib.sha256(f"{master}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def data_seed(master: int) -> int:
    return layer_seed(master, "__data__")


def load_config(path_or_dict) -> PipelineConfig:
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        try:
            with open(path_or_dict) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")

    known = {"seed", "dtype", "compress", "layers", "prune", "train",
             "data", "arch"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")

    cfg = PipelineConfig(
        seed=int(raw.get("seed", _TOP_DEFAULTS["seed"])),
        dtype=raw.get("dtype", _TOP_DEFAULTS["dtype"]),
        compress=_merge("compress", _COMPRESS_DEFAULTS,
                        raw.get("compress", {})),
        prune=_merge("prune", _PRUNE_DEFAULTS, raw.get("prune", {})),
        train=_merge("train", _TRAIN_DEFAULTS, raw.get("train", {})),
        data=_merge("data", _DATA_DEFAULTS, raw.get("data", {})),
        arch=_merge("arch", _ARCH_DEFAULTS, raw.get("arch", {})),
        layers={name: _merge(f"layers.{name}", _COMPRESS_DEFAULTS, over)
                for name, over in raw.get("layers", {}).items()},
    )
    # per-layer overrides should not silently reintroduce global defaults
    cfg.layers = {name: {k: v for k, v in raw.get("layers", {})[name].items()}
                  for name in raw.get("layers", {})}
    for name, over in cfg.layers.items():
        for key in over:
            if key not in _COMPRESS_DEFAULTS:
                raise ConfigError(f"unknown key layers.{name}.{key!r}")

    if cfg.dtype not in ("f32", "f64"):
        raise ConfigError(f"dtype must be f32 or f64, got {cfg.dtype!r}")
    if cfg.compress["format"] not in FORMATS:
        raise ConfigError(f"compress.format {cfg.compress['format']!r} "
                          f"not one of {FORMATS}")
    if cfg.compress["mode"] not in MODES:
        raise ConfigError(f"compress.mode {cfg.compress['mode']!r} "
                          f"not one of {MODES}")
    if cfg.compress["init"] not in (None, "residual", "masked"):
        raise ConfigError("compress.init must be residual or masked")
    if not 0 < cfg.compress["budget_fraction"] <= 1:
        raise ConfigError("compress.budget_fraction must be in (0, 1]")
    if not 0 <= cfg.prune["target_sparsity"] < 1:
        raise ConfigError("prune.target_sparsity must be in [0, 1)")
    if cfg.prune["total_steps"] < 1:
        raise ConfigError("prune.total_steps must be >= 1")
    if not 0 <= cfg.train["alpha"] <= 1:
        raise ConfigError("train.alpha must be in [0, 1]")
    if cfg.train["temperature"] <= 0:
        raise ConfigError("train.temperature must be positive")
    return cfg
