"""Low-rank + sparse layer records.

A compressed layer holds a factorized low-rank part L, a dense sparse
residual S, and a binary mask M, all over a common working ("fold") shape.
Two initializations (residual, masked) and two reconstructions (additive,
masking) are supported, plus the two single-component baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decompose import (DecomposeConfig, budget_ranks, default_fold_shape,
                        fit, masked_decompose, matrix_dims)
from .errors import ModeMismatch, ShapeMismatch
from .formats import FactorizedTensor, format_name, param_count, reconstruct
from .tensor import as_mask, as_tensor

MODES = ("additive", "masking", "lowrank_only", "sparse_only")


@dataclass
class LowRankSparseLayer:
    name: str
    original_shape: tuple
    fold_shape: tuple
    mode: str
    low_rank: FactorizedTensor | None = None
    sparse: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModeMismatch(f"unknown mode {self.mode!r}")
        self.original_shape = tuple(self.original_shape)
        self.fold_shape = tuple(self.fold_shape)
        if self.mode == "sparse_only" and self.low_rank is not None:
            raise ModeMismatch("sparse_only layer must not carry L")
        if self.mode == "lowrank_only" and self.sparse is not None:
            raise ModeMismatch("lowrank_only layer must not carry S")
        for arr in (self.sparse, self.mask):
            if arr is not None and arr.shape != self.fold_shape:
                raise ShapeMismatch(
                    f"{self.name}: component shape {arr.shape} != fold "
                    f"shape {self.fold_shape}")

    @property
    def format(self) -> str | None:
        return None if self.low_rank is None else format_name(self.low_rank)

    def low_rank_full(self) -> np.ndarray:
        return reconstruct(self.low_rank).reshape(self.fold_shape)

    def effective_weight(self) -> np.ndarray:
        """Reconstruct the weight this layer represents, in original shape."""
        if self.mode == "additive":
            w = reconstruct_additive(self)
        elif self.mode == "masking":
            w = reconstruct_masking(self)
        elif self.mode == "lowrank_only":
            w = self.low_rank_full().reshape(self.original_shape)
        else:
            w = (self.sparse * self.mask).reshape(self.original_shape)
        return w

    def stored_params(self) -> int:
        """Reals that must be stored: factors of L plus unmasked S entries."""
        total = 0
        if self.low_rank is not None:
            total += param_count(self.low_rank)
        if self.mask is not None and self.mode != "lowrank_only":
            total += int(np.count_nonzero(self.mask))
        return total

    def numel(self) -> int:
        return math.prod(self.original_shape)


def top_k_mask(a: np.ndarray, fraction: float) -> np.ndarray:
    """Indicator of the ceil(fraction * numel) largest-|a| entries.

    Ties break by flat index, lower index first.
    """
    if not 0 <= fraction <= 1:
        raise ShapeMismatch("fraction must be in [0, 1]")
    count = math.ceil(fraction * a.size)
    bits = np.zeros(a.size, dtype=np.uint8)
    if count:
        order = np.argsort(-np.abs(a.ravel()), kind="stable")
        bits[order[:count]] = 1
    return bits.reshape(a.shape)


def plan(a: np.ndarray, cfg: DecomposeConfig):
    """Resolve the fold shape, rank spec and (for ttm) dim factorization."""
    if cfg.format == "ttm":
        if cfg.fold_shape is not None:
            row_dims, col_dims = (tuple(cfg.fold_shape[0]),
                                  tuple(cfg.fold_shape[1]))
        else:
            row_dims, col_dims = matrix_dims(a.shape)
        if math.prod(row_dims) * math.prod(col_dims) != a.size:
            raise ShapeMismatch(f"ttm dims {row_dims}x{col_dims} != {a.shape}")
        fold_shape = row_dims + col_dims
        ranks, _ = budget_ranks(fold_shape, "ttm", cfg.budget_fraction,
                                cfg.strict_budget)
        return fold_shape, ranks, row_dims, col_dims
    fold_shape = tuple(cfg.fold_shape) if cfg.fold_shape is not None \
        else default_fold_shape(a.shape)
    if math.prod(fold_shape) != a.size:
        raise ShapeMismatch(f"fold shape {fold_shape} != numel {a.size}")
    ranks, _ = budget_ranks(fold_shape, cfg.format, cfg.budget_fraction,
                            cfg.strict_budget)
    return fold_shape, ranks, None, None


def _fit_target(work: np.ndarray, row_dims):
    # ttm fits the matrix view of the paired-shape working tensor
    if row_dims is None:
        return work
    rows = math.prod(row_dims)
    return work.reshape(rows, work.size // rows)


def init_residual(a: np.ndarray, cfg: DecomposeConfig,
                  name: str = "") -> LowRankSparseLayer:
    """L fits a by least squares; S = a - L; M all ones; additive mode.

    Before any pruning the additive reconstruction reproduces ``a``
    exactly (up to reshape round-off, i.e. bit-exactly).
    """
    a = as_tensor(a)
    fold_shape, ranks, row_dims, col_dims = plan(a, cfg)
    work = a.reshape(fold_shape)
    low = fit(_fit_target(work, row_dims), cfg.format, ranks,
              row_dims=row_dims, col_dims=col_dims,
              max_als_iters=cfg.max_als_iters, als_tol=cfg.als_tol,
              seed=cfg.seed)
    full = reconstruct(low).reshape(fold_shape)
    return LowRankSparseLayer(
        name=name, original_shape=a.shape, fold_shape=fold_shape,
        mode="additive", low_rank=low, sparse=work - full,
        mask=np.ones(fold_shape, dtype=np.uint8))


def init_masking(a: np.ndarray, cfg: DecomposeConfig,
                 top_k_fraction: float, name: str = "") -> LowRankSparseLayer:
    """Fit L on the bottom-(1-K) entries only; keep the top-K in S.

    M is the indicator of the kept (top-K magnitude) entries, so the
    masking reconstruction reproduces those entries of ``a`` exactly.
    """
    a = as_tensor(a)
    fold_shape, ranks, row_dims, col_dims = plan(a, cfg)
    work = a.reshape(fold_shape)
    kept = top_k_mask(work, top_k_fraction)
    omega = (1 - kept).astype(np.uint8)
    target = _fit_target(work, row_dims)
    low = masked_decompose(
        target, omega.reshape(target.shape), cfg.format, ranks,
        row_dims=row_dims, col_dims=col_dims, masked_iters=cfg.masked_iters,
        max_als_iters=cfg.max_als_iters, als_tol=cfg.als_tol, seed=cfg.seed)
    full = reconstruct(low).reshape(fold_shape)
    # S keeps the original values on the kept entries so the masking
    # reconstruction reproduces them exactly; elsewhere S is the residual.
    sparse = work - (1.0 - kept) * full
    return LowRankSparseLayer(
        name=name, original_shape=a.shape, fold_shape=fold_shape,
        mode="masking", low_rank=low, sparse=sparse, mask=kept)


def init_lowrank_only(a: np.ndarray, cfg: DecomposeConfig,
                      name: str = "") -> LowRankSparseLayer:
    layer = init_residual(a, cfg, name)
    return LowRankSparseLayer(
        name=name, original_shape=layer.original_shape,
        fold_shape=layer.fold_shape, mode="lowrank_only",
        low_rank=layer.low_rank)


def init_sparse_only(a: np.ndarray, name: str = "") -> LowRankSparseLayer:
    a = as_tensor(a)
    return LowRankSparseLayer(
        name=name, original_shape=a.shape, fold_shape=a.shape,
        mode="sparse_only", sparse=a.copy(),
        mask=np.ones(a.shape, dtype=np.uint8))


def reconstruct_additive(layer: LowRankSparseLayer) -> np.ndarray:
    """L + M .* S, reshaped to the layer's original shape."""
    if layer.mode != "additive":
        raise ModeMismatch(f"layer {layer.name} is {layer.mode}, not additive")
    w = layer.low_rank_full() + layer.mask * layer.sparse
    return w.reshape(layer.original_shape)


def reconstruct_masking(layer: LowRankSparseLayer) -> np.ndarray:
    """(1 - M) .* L + M .* S: each entry comes from exactly one source."""
    if layer.mode != "masking":
        raise ModeMismatch(f"layer {layer.name} is {layer.mode}, not masking")
    m = layer.mask.astype(np.float64)
    w = (1.0 - m) * layer.low_rank_full() + m * layer.sparse
    return w.reshape(layer.original_shape)


def weight_gradients(layer: LowRankSparseLayer, d_weight: np.ndarray):
    """Split a gradient w.r.t. the effective weight into component grads.

    Returns ``(d_sparse, d_low_rank_full)``; either may be None.  Masked S
    entries receive exactly zero gradient.
    """
    g = d_weight.reshape(layer.fold_shape)
    d_sparse = None
    d_low = None
    if layer.mode == "additive":
        d_sparse = layer.mask * g
        d_low = g
    elif layer.mode == "masking":
        m = layer.mask.astype(np.float64)
        d_sparse = m * g
        d_low = (1.0 - m) * g
    elif layer.mode == "lowrank_only":
        d_low = g
    else:
        d_sparse = layer.mask * g
    return d_sparse, d_low
