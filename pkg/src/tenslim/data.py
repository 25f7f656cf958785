"""Desk-scale datasets: the bundled 8x8 digits and synthetic clusters."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def load_dataset(spec: str, seed: int = 0, train_size: int | None = None) -> dict:
    """Load a dataset by name ("digits", "synthetic") or .npz path.

    Returns {"x_train", "y_train", "x_val", "y_val"} with images of shape
    (N, H, W, C) in float64 and integer labels.
    """
    if spec == "digits":
        return _digits(seed, train_size)
    if spec == "synthetic":
        return _synthetic(seed, train_size or 600)
    if spec.endswith(".npz"):
        with np.load(spec) as z:
            try:
                return {k: np.asarray(z[k]) for k in
                        ("x_train", "y_train", "x_val", "y_val")}
            except KeyError as e:
                raise ConfigError(f"dataset file missing array {e}") from e
    raise ConfigError(f"unknown dataset {spec!r}")


def _digits(seed: int, train_size: int | None) -> dict:
    from sklearn.datasets import load_digits

    digits = load_digits()
    x = (digits.images / 16.0)[..., None].astype(np.float64)
    y = digits.target.astype(np.int64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    n_train = train_size or int(0.8 * len(x))
    return {"x_train": x[:n_train], "y_train": y[:n_train],
            "x_val": x[n_train:], "y_val": y[n_train:]}


def _synthetic(seed: int, n: int, classes: int = 10,
               side: int = 8, noise: float = 0.35) -> dict:
    """Gaussian class prototypes rendered as images, plus iid noise."""
    rng = np.random.default_rng(seed)
    prototypes = rng.standard_normal((classes, side, side, 1))
    y = rng.integers(0, classes, size=n)
    x = prototypes[y] + noise * rng.standard_normal((n, side, side, 1))
    n_train = int(0.8 * n)
    return {"x_train": x[:n_train], "y_train": y[:n_train],
            "x_val": x[n_train:], "y_val": y[n_train:]}
