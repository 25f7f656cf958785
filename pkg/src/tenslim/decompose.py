"""Fitting factorized tensors to dense targets.

CP uses alternating least squares; Tucker uses truncated HOSVD; TT uses the
sequential-SVD sweep; TTM runs TT-SVD over the paired-index folding of a
matrix.  Masked variants minimize the error on unmasked entries only, via
iterative imputation.  ``budget_ranks`` picks the largest uniform rank whose
parameter count fits a fraction of the original element count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import formats
from .errors import (BudgetInfeasible, EmptySupport, RankTooLarge,
                     ShapeMismatch, SingularUpdate)
from .formats import (CPFactors, FactorizedTensor, TTCores, TTMCores,
                      TuckerFactors, khatri_rao, param_count, reconstruct)
from .tensor import as_tensor, frobenius_norm, mode_n_product, unfold

FORMATS = ("cp", "tucker", "tt", "ttm")

_RIDGE = 1e-10  # regularization on ALS normal equations


@dataclass
class DecomposeConfig:
    format: str = "tt"
    budget_fraction: float = 0.10
    max_als_iters: int = 100
    als_tol: float = 1e-6
    fold_shape: tuple | None = None
    masked_iters: int = 10
    seed: int = 0
    strict_budget: bool = False

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ShapeMismatch(f"unknown format {self.format!r}")
        if not 0 < self.budget_fraction <= 1:
            raise BudgetInfeasible("budget_fraction must be in (0, 1]")
        if self.max_als_iters < 1:
            raise ShapeMismatch("max_als_iters must be >= 1")


def balanced_split(n: int) -> tuple:
    """Split n into (a, b) with a*b == n and a the largest divisor <= sqrt(n)."""
    a = 1
    for k in range(1, int(math.isqrt(n)) + 1):
        if n % k == 0:
            a = k
    return (a, n // a)


def default_fold_shape(shape) -> tuple:
    """Working shape for CP/Tucker/TT: fold matrices to balanced order-4."""
    shape = tuple(shape)
    if len(shape) == 2:
        return balanced_split(shape[0]) + balanced_split(shape[1])
    return shape


def matrix_dims(shape) -> tuple:
    """Balanced (row_dims, col_dims) for TTM; non-matrices matricize as
    (prod(shape[:-1]), shape[-1]) first."""
    shape = tuple(shape)
    rows = math.prod(shape[:-1]) if len(shape) != 2 else shape[0]
    cols = shape[-1]
    return balanced_split(rows), balanced_split(cols)


def budget_ranks(shape, fmt: str, budget_fraction: float, strict: bool = False):
    """Largest uniform rank whose param count fits the budget.

    For ``ttm`` the shape must be the order-2d paired shape
    (I_1..I_d, J_1..J_d).  Returns ``(ranks, clamped)`` where ``clamped``
    flags that even rank 1 exceeded the budget and was kept anyway.
    """
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ShapeMismatch("empty shape")
    numel = math.prod(shape)
    budget = budget_fraction * numel

    if fmt == "ttm":
        d = len(shape) // 2
        if len(shape) != 2 * d or d == 0:
            raise ShapeMismatch("ttm needs an even-order paired shape")
        merged = tuple(shape[n] * shape[d + n] for n in range(d))
        ranks, clamped = _budget_tt(merged, budget, strict)
        return ranks, clamped
    if fmt == "tt":
        return _budget_tt(shape, budget, strict)
    if fmt == "cp":
        total = sum(shape)
        r = max(1, int(budget // total))
        if r * total > budget:
            r = 1
            if strict:
                raise BudgetInfeasible(f"rank 1 CP needs {total} > {budget}")
            return 1, True
        return r, False
    if fmt == "tucker":
        best, clamped = None, False
        for r in range(1, max(shape) + 1):
            ranks = tuple(min(r, s) for s in shape)
            cost = math.prod(ranks) + sum(rn * s for rn, s in zip(ranks, shape))
            if cost <= budget:
                best = ranks
            else:
                break
        if best is None:
            if strict:
                raise BudgetInfeasible("rank-1 Tucker exceeds the budget")
            return tuple(1 for _ in shape), True
        return best, clamped
    raise ShapeMismatch(f"unknown format {fmt!r}")


def _budget_tt(shape, budget, strict):
    d = len(shape)
    bounds = [min(math.prod(shape[:n]), math.prod(shape[n:]))
              for n in range(1, d)]
    best = None
    for r in range(1, (max(bounds) if bounds else 1) + 1):
        ranks = (1,) + tuple(min(r, b) for b in bounds) + (1,)
        cost = sum(ranks[n] * shape[n] * ranks[n + 1] for n in range(d))
        if cost <= budget:
            best = ranks
        else:
            break
    if best is None:
        ones = (1,) * (d + 1)
        if strict:
            raise BudgetInfeasible("rank-1 TT exceeds the budget")
        return ones, True
    return best, False


def _svd(mat):
    return np.linalg.svd(mat, full_matrices=False)


def cp_als(a, rank: int, max_iters: int = 100, tol: float = 1e-6,
           seed: int = 0):
    """Rank-R CP fit by alternating least squares.

    Factors are initialized from the leading singular vectors of each mode
    unfolding (Gaussian-padded when R exceeds a mode size).  Returns
    ``(CPFactors, fit_errors)`` with one relative error per sweep.
    """
    a = as_tensor(a)
    d = a.ndim
    norm_a = frobenius_norm(a)
    if norm_a == 0.0:
        zeros = [np.zeros((s, rank)) for s in a.shape]
        return CPFactors(tuple(zeros)), [0.0]

    rng = np.random.default_rng(seed)
    factors = []
    for n in range(d):
        u, _, _ = _svd(unfold(a, n))
        cols = min(rank, u.shape[1])
        init = np.empty((a.shape[n], rank))
        init[:, :cols] = u[:, :cols]
        if cols < rank:
            init[:, cols:] = rng.standard_normal((a.shape[n], rank - cols))
        factors.append(init)

    errors = []
    prev = np.inf
    eye = np.eye(rank)
    for _ in range(max_iters):
        for n in range(d):
            others = [factors[m] for m in range(d) if m != n]
            gram = np.ones((rank, rank))
            for u in others:
                gram *= u.T @ u
            rhs = unfold(a, n) @ khatri_rao(others)
            try:
                factors[n] = np.linalg.solve(gram + _RIDGE * eye, rhs.T).T
            except np.linalg.LinAlgError:
                warnings.warn("rank-deficient ALS step, using least squares",
                              RankTooLarge)
                factors[n] = np.linalg.lstsq(gram, rhs.T, rcond=None)[0].T
        fit = CPFactors(tuple(factors))
        err = frobenius_norm(reconstruct(fit) - a) / norm_a
        errors.append(err)
        if abs(prev - err) < tol:
            break
        prev = err
    return CPFactors(tuple(np.array(f) for f in factors)), errors


def _clamp_rank(requested: int, available: int, what: str) -> int:
    if requested > available:
        warnings.warn(f"{what} rank {requested} clamped to {available}",
                      RankTooLarge)
        return available
    return max(1, requested)


def tucker_hosvd(a, ranks) -> TuckerFactors:
    """Truncated higher-order SVD with per-mode ranks."""
    a = as_tensor(a)
    if np.isscalar(ranks) or isinstance(ranks, (int, np.integer)):
        ranks = (int(ranks),) * a.ndim
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != a.ndim:
        raise ShapeMismatch(f"{len(ranks)} ranks for order-{a.ndim} tensor")
    factors = []
    for n in range(a.ndim):
        r = _clamp_rank(ranks[n], a.shape[n], f"Tucker mode {n}")
        u, _, _ = _svd(unfold(a, n))
        factors.append(u[:, :r])
    core = a
    for n, u in enumerate(factors):
        core = mode_n_product(core, u.T, n, keepdims=True)
    return TuckerFactors(core, tuple(factors))


def _normalize_tt_ranks(ranks, d) -> tuple:
    ranks = tuple(int(r) for r in np.atleast_1d(ranks))
    if len(ranks) == d + 1:
        if ranks[0] != 1 or ranks[-1] != 1:
            raise ShapeMismatch("TT boundary ranks must be 1")
        return ranks
    if len(ranks) == d - 1:
        return (1,) + ranks + (1,)
    if len(ranks) == 1:
        return (1,) + ranks * (d - 1) + (1,)
    raise ShapeMismatch(f"cannot interpret TT ranks of length {len(ranks)}")


def tt_svd(a, ranks) -> TTCores:
    """Tensor-train decomposition by d-1 sequential truncated SVDs."""
    a = as_tensor(a)
    d = a.ndim
    ranks = _normalize_tt_ranks(ranks, d)
    cores = []
    rem = a.reshape(a.shape[0], -1)
    r_prev = 1
    for n in range(d - 1):
        rem = rem.reshape(r_prev * a.shape[n], -1)
        u, s, vt = _svd(rem)
        r = _clamp_rank(ranks[n + 1], len(s), f"TT bond {n + 1}")
        cores.append(u[:, :r].reshape(r_prev, a.shape[n], r))
        rem = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(rem.reshape(r_prev, a.shape[-1], 1))
    return TTCores(tuple(cores))


def interleave_pairs(t, d: int) -> np.ndarray:
    """(I_1..I_d, J_1..J_d) tensor -> merged (I_1*J_1, ..., I_d*J_d)."""
    perm = [x for n in range(d) for x in (n, d + n)]
    merged_shape = tuple(t.shape[n] * t.shape[d + n] for n in range(d))
    return np.ascontiguousarray(np.transpose(t, perm)).reshape(merged_shape)


def ttm_decompose(w, row_dims, col_dims, ranks) -> TTMCores:
    """TTM fit of a matrix via TT-SVD on its paired-index folding."""
    w = as_tensor(w)
    row_dims = tuple(int(x) for x in row_dims)
    col_dims = tuple(int(x) for x in col_dims)
    if w.ndim != 2:
        raise ShapeMismatch("ttm_decompose expects a matrix")
    if math.prod(row_dims) != w.shape[0] or math.prod(col_dims) != w.shape[1]:
        raise ShapeMismatch(
            f"dims {row_dims}x{col_dims} do not factor {w.shape}")
    d = len(row_dims)
    if len(col_dims) != d:
        raise ShapeMismatch("row_dims and col_dims must have equal length")
    paired = w.reshape(row_dims + col_dims)
    merged = interleave_pairs(paired, d)
    tt = tt_svd(merged, _normalize_tt_ranks(ranks, d))
    cores = tuple(
        c.reshape(c.shape[0], row_dims[n], col_dims[n], c.shape[-1])
        for n, c in enumerate(tt.cores))
    return TTMCores(cores)


def fit(a, fmt: str, ranks, *, row_dims=None, col_dims=None,
        max_als_iters: int = 100, als_tol: float = 1e-6,
        seed: int = 0) -> FactorizedTensor:
    """Dispatch to the fitter for ``fmt``.

    ``a`` is the working-shape tensor for cp/tucker/tt, or the matrix for
    ttm (with ``row_dims``/``col_dims`` supplied).
    """
    if fmt == "cp":
        factors, _ = cp_als(a, int(ranks), max_als_iters, als_tol, seed)
        return factors
    if fmt == "tucker":
        return tucker_hosvd(a, ranks)
    if fmt == "tt":
        return tt_svd(a, ranks)
    if fmt == "ttm":
        return ttm_decompose(a, row_dims, col_dims, ranks)
    raise ShapeMismatch(f"unknown format {fmt!r}")


def masked_decompose(a, omega, fmt: str, ranks, *, row_dims=None,
                     col_dims=None, masked_iters: int = 10,
                     max_als_iters: int = 100, als_tol: float = 1e-6,
                     seed: int = 0) -> FactorizedTensor:
    """Fit only the entries where ``omega`` is 1, by iterative imputation.

    Masked (omega == 0) entries are imputed with the current reconstruction
    and re-fit for a fixed number of outer iterations; their final values
    are unconstrained.
    """
    a = as_tensor(a)
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != a.shape:
        raise ShapeMismatch(f"mask shape {omega.shape} != {a.shape}")
    if not omega.any():
        raise EmptySupport("mask removes every entry")

    def run(x):
        return fit(x, fmt, ranks, row_dims=row_dims, col_dims=col_dims,
                   max_als_iters=max_als_iters, als_tol=als_tol, seed=seed)

    def full(f):
        rec = reconstruct(f)
        if fmt == "ttm":
            rec = rec.reshape(a.shape)
        return rec

    if omega.all():
        return run(a)

    x = a * omega
    f = run(x)
    for _ in range(masked_iters):
        x = a * omega + full(f) * (1.0 - omega)
        f = run(x)
    return f
