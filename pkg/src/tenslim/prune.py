"""Global magnitude pruning with the cubic sparsity schedule.

At each prune event the smallest-magnitude unmasked sparse entries, pooled
across every layer under a single threshold, are masked until the global
zeroed fraction reaches the scheduled sparsity.  Masks only ever gain
zeros (monotone).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStep, ScheduleRegression
from .lrs import LowRankSparseLayer


@dataclass
class PruneSchedule:
    target_sparsity: float
    total_steps: int
    current_step: int = 0

    def __post_init__(self):
        if not 0 <= self.target_sparsity < 1:
            raise InvalidStep("target sparsity must be in [0, 1)")
        if self.total_steps < 1:
            raise InvalidStep("total_steps must be >= 1")

    def sparsity_at(self, t: int) -> float:
        return schedule_sparsity(t, self.total_steps, self.target_sparsity)


def schedule_sparsity(t: int, n: int, s_f: float) -> float:
    """Cubic ramp: s_t = s_f * (t/n)^3, with s_0 = 0 and s_n = s_f."""
    if n < 1 or not 0 <= t <= n:
        raise InvalidStep(f"step {t} outside [0, {n}]")
    return s_f * (t / n) ** 3


def pooled_sparsity(layers) -> float:
    """Fraction of masked S-entries pooled over all prunable layers."""
    total = 0
    zeros = 0
    for layer in layers:
        if layer.mask is None:
            continue
        total += layer.mask.size
        zeros += layer.mask.size - int(np.count_nonzero(layer.mask))
    return zeros / total if total else 0.0


def global_magnitude_prune(layers, s_t: float) -> int:
    """Mask the smallest currently-unmasked |S| entries across all layers.

    One magnitude threshold is shared by every layer; ties break by layer
    order then flat index.  Returns the number of newly masked entries.
    Raises ScheduleRegression if the pool is already sparser than ``s_t``
    (beyond the one-element rounding slack).
    """
    layers = [l for l in layers if l.mask is not None and l.sparse is not None]
    total = sum(l.mask.size for l in layers)
    if total == 0:
        return 0
    zeros = sum(l.mask.size - int(np.count_nonzero(l.mask)) for l in layers)
    target_zeros = int(round(s_t * total))
    if target_zeros < zeros - 1:
        raise ScheduleRegression(
            f"target sparsity {s_t:.6f} below current {zeros / total:.6f}")
    need = target_zeros - zeros
    if need <= 0:
        return 0

    mags = []
    owners = []
    for k, layer in enumerate(layers):
        alive = layer.mask.ravel() == 1
        idx = np.flatnonzero(alive)
        mags.append(np.abs(layer.sparse.ravel()[idx]))
        owners.append((k, idx))
    pooled = np.concatenate(mags)
    # stable sort preserves (layer order, flat index) on ties
    order = np.argsort(pooled, kind="stable")[:need]

    offsets = np.cumsum([0] + [m.size for m in mags[:-1]])
    for pos in order:
        k = int(np.searchsorted(offsets, pos, side="right")) - 1
        layer_k, idx = owners[k]
        flat = idx[pos - offsets[k]]
        layers[layer_k].mask.ravel()[flat] = 0
    return need
