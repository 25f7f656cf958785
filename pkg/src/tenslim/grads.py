"""Gradients of dense reconstruction with respect to factorized parameters.

Given an upstream gradient G with the shape of the reconstructed tensor,
these return the gradient of <G, reconstruct(f)> w.r.t. each stored factor
array.  Reconstruction is multilinear, so every factor gradient is a
contraction of G with the remaining factors.
"""

from __future__ import annotations

import numpy as np

from .formats import (CPFactors, FactorizedTensor, TTCores, TTMCores,
                      TuckerFactors, khatri_rao)
from .tensor import mode_n_product, unfold


def trainable_arrays(f: FactorizedTensor) -> list:
    """Stored arrays of ``f`` in a canonical order matching factor_grads."""
    if isinstance(f, CPFactors):
        return list(f.factors)
    if isinstance(f, TuckerFactors):
        return [f.core, *f.factors]
    if isinstance(f, (TTCores, TTMCores)):
        return list(f.cores)
    raise TypeError(f"unknown factorized tensor {type(f)!r}")


def factor_grads(f: FactorizedTensor, g: np.ndarray) -> list:
    """Gradient arrays aligned one-to-one with :func:`trainable_arrays`."""
    g = np.asarray(g, dtype=np.float64).reshape(f.shape)
    if isinstance(f, CPFactors):
        return _cp_grads(f, g)
    if isinstance(f, TuckerFactors):
        return _tucker_grads(f, g)
    if isinstance(f, TTCores):
        return _tt_grads(list(f.cores), g)
    if isinstance(f, TTMCores):
        return _ttm_grads(f, g)
    raise TypeError(f"unknown factorized tensor {type(f)!r}")


def _cp_grads(f: CPFactors, g: np.ndarray) -> list:
    d = len(f.factors)
    if d == 1:
        # order-1 CP: tensor = row sums of the single factor
        return [np.repeat(g[:, None], f.rank, axis=1)]
    grads = []
    for n in range(d):
        others = [f.factors[m] for m in range(d) if m != n]
        grads.append(unfold(g, n) @ khatri_rao(others))
    return grads


def _tucker_grads(f: TuckerFactors, g: np.ndarray) -> list:
    d = len(f.factors)
    d_core = g
    for n in range(d):
        d_core = mode_n_product(d_core, f.factors[n].T, n, keepdims=True)
    grads = [d_core]
    for n in range(d):
        partial = f.core
        for m in range(d):
            if m != n:
                partial = mode_n_product(partial, f.factors[m], m,
                                         keepdims=True)
        grads.append(unfold(g, n) @ unfold(partial, n).T)
    return grads


def _tt_grads(cores: list, g: np.ndarray) -> list:
    d = len(cores)
    dims = [c.shape[1] for c in cores]
    # left[n]: (prod dims[:n], r_n); right[n]: (r_{n+1}, prod dims[n+1:])
    left = [np.ones((1, 1))]
    for c in cores[:-1]:
        prev = left[-1]
        nxt = prev @ c.reshape(c.shape[0], -1)
        left.append(nxt.reshape(-1, c.shape[-1]))
    right = [np.ones((1, 1))]
    for c in reversed(cores[1:]):
        nxt = c.reshape(-1, c.shape[-1]) @ right[0]
        right.insert(0, nxt.reshape(c.shape[0], -1))
    grads = []
    for n in range(d):
        gk = g.reshape(left[n].shape[0], dims[n], right[n].shape[1])
        grads.append(np.einsum("la,lir,br->aib", left[n], gk, right[n]))
    return grads


def _ttm_grads(f: TTMCores, g: np.ndarray) -> list:
    d = len(f.cores)
    # reorder g to interleaved pairs and merge each (I_n, J_n)
    perm = [x for n in range(d) for x in (n, d + n)]
    merged_dims = [f.cores[n].shape[1] * f.cores[n].shape[2] for n in range(d)]
    g_merged = np.ascontiguousarray(np.transpose(g, perm)).reshape(merged_dims)
    merged_cores = [c.reshape(c.shape[0], -1, c.shape[-1]) for c in f.cores]
    grads = _tt_grads(merged_cores, g_merged)
    return [gr.reshape(c.shape) for gr, c in zip(grads, f.cores)]
