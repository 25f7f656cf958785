"""Factorized tensor formats: CP, Tucker, TT, and TT-matrix (TTM).

Each format stores only its factors.  ``reconstruct`` materializes the full
dense tensor, ``element_at`` evaluates a single entry without full
reconstruction, and ``param_count`` is the exact number of stored reals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Union

import numpy as np

from .errors import IndexOutOfBounds, RankChainBroken
from .tensor import as_tensor, mode_n_product


@dataclass(frozen=True)
class CPFactors:
    """Sum of R rank-1 terms; factor n has shape I_n x R."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(as_tensor(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)
        ranks = {f.shape[1] for f in factors}
        if len(ranks) != 1:
            raise RankChainBroken(f"CP factors disagree on rank: {sorted(ranks)}")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor R_1 x ... x R_d with per-mode factors I_n x R_n."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "core", as_tensor(self.core))
        factors = tuple(as_tensor(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)
        if self.core.ndim != len(factors):
            raise RankChainBroken("Tucker core order != number of factors")
        for n, f in enumerate(factors):
            if f.shape[1] != self.core.shape[n]:
                raise RankChainBroken(
                    f"factor {n} columns {f.shape[1]} != core mode {self.core.shape[n]}"
                )

    @property
    def ranks(self) -> tuple:
        return self.core.shape

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class TTCores:
    """Tensor-train cores, core n of shape R_{n-1} x I_n x R_n, R_0=R_d=1."""

    cores: tuple

    def __post_init__(self):
        cores = tuple(as_tensor(c) for c in self.cores)
        object.__setattr__(self, "cores", cores)
        _check_chain([c.shape for c in cores], order=3)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[-1] for c in self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)


@dataclass(frozen=True)
class TTMCores:
    """TT factorization of a matrix folded to paired (I_n, J_n) modes.

    Core n has shape R_{n-1} x I_n x J_n x R_n.  ``shape`` is the order-2d
    tensor shape (I_1..I_d, J_1..J_d); ``matrix_shape`` is (prod I, prod J).
    """

    cores: tuple

    def __post_init__(self):
        cores = tuple(as_tensor(c) for c in self.cores)
        object.__setattr__(self, "cores", cores)
        _check_chain([c.shape for c in cores], order=4)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[-1] for c in self.cores)

    @property
    def row_dims(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_dims(self) -> tuple:
        return tuple(c.shape[2] for c in self.cores)

    @property
    def shape(self) -> tuple:
        return self.row_dims + self.col_dims

    @property
    def matrix_shape(self) -> tuple:
        return (math.prod(self.row_dims), math.prod(self.col_dims))


FactorizedTensor = Union[CPFactors, TuckerFactors, TTCores, TTMCores]

FORMAT_NAMES = {CPFactors: "cp", TuckerFactors: "tucker", TTCores: "tt", TTMCores: "ttm"}


def _check_chain(shapes, order):
    if not shapes:
        raise RankChainBroken("no cores")
    for s in shapes:
        if len(s) != order:
            raise RankChainBroken(f"core of order {len(s)}, expected {order}")
    if shapes[0][0] != 1 or shapes[-1][-1] != 1:
        raise RankChainBroken("boundary ranks must be 1")
    for left, right in zip(shapes, shapes[1:]):
        if left[-1] != right[0]:
            raise RankChainBroken(f"rank chain broken: {left[-1]} != {right[0]}")


def format_name(f: FactorizedTensor) -> str:
    return FORMAT_NAMES[type(f)]


def khatri_rao(matrices) -> np.ndarray:
    """Column-wise Kronecker product, first matrix's index slowest."""

    def kr(a, b):
        return (a[:, None, :] * b[None, :, :]).reshape(-1, a.shape[1])

    return reduce(kr, matrices)


def reconstruct(f: FactorizedTensor) -> np.ndarray:
    """Materialize the full dense tensor of ``f.shape``."""
    if isinstance(f, CPFactors):
        full = f.factors[0] @ khatri_rao(f.factors[1:]).T if len(f.factors) > 1 \
            else f.factors[0].sum(axis=1)
        return as_tensor(full, f.shape)
    if isinstance(f, TuckerFactors):
        out = f.core
        for n, u in enumerate(f.factors):
            out = mode_n_product(out, u, n, keepdims=True)
        return as_tensor(out)
    if isinstance(f, TTCores):
        return as_tensor(_tt_full([c for c in f.cores]), f.shape)
    if isinstance(f, TTMCores):
        merged = [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3])
                  for c in f.cores]
        d = len(f.cores)
        interleaved = _tt_full(merged).reshape(
            tuple(x for c in f.cores for x in (c.shape[1], c.shape[2])))
        perm = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
        return as_tensor(np.transpose(interleaved, perm))
    raise TypeError(f"unknown factorized tensor {type(f)!r}")


def _tt_full(cores) -> np.ndarray:
    out = cores[0].reshape(-1, cores[0].shape[-1])
    for core in cores[1:]:
        out = out @ core.reshape(core.shape[0], -1)
        out = out.reshape(-1, core.shape[-1])
    return out


def element_at(f: FactorizedTensor, index) -> float:
    """Evaluate a single entry of the represented tensor."""
    index = tuple(int(i) for i in index)
    shape = f.shape
    if len(index) != len(shape) or any(
            not 0 <= i < s for i, s in zip(index, shape)):
        raise IndexOutOfBounds(f"index {index} outside shape {shape}")
    if isinstance(f, CPFactors):
        rows = [u[i] for u, i in zip(f.factors, index)]
        return float(np.prod(rows, axis=0).sum())
    if isinstance(f, TuckerFactors):
        out = f.core
        for u, i in zip(f.factors, index):
            out = np.tensordot(u[i], out, axes=(0, 0))
        return float(out)
    if isinstance(f, TTCores):
        out = np.ones((1, 1))
        for core, i in zip(f.cores, index):
            out = out @ core[:, i, :]
        return float(out[0, 0])
    if isinstance(f, TTMCores):
        d = len(f.cores)
        out = np.ones((1, 1))
        for n, core in enumerate(f.cores):
            out = out @ core[:, index[n], index[d + n], :]
        return float(out[0, 0])
    raise TypeError(f"unknown factorized tensor {type(f)!r}")


def param_count(f: FactorizedTensor) -> int:
    """Exact number of stored reals."""
    if isinstance(f, CPFactors):
        return f.rank * sum(f.shape)
    if isinstance(f, TuckerFactors):
        return f.core.size + sum(u.size for u in f.factors)
    if isinstance(f, (TTCores, TTMCores)):
        return sum(c.size for c in f.cores)
    raise TypeError(f"unknown factorized tensor {type(f)!r}")
