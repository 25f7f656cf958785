"""Dense tensor primitives.

Tensors are plain float64 numpy arrays in C (row-major) order; masks are
uint8 arrays of the same shape with entries in {0, 1}.  All operations are
pure and never mutate their inputs.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidMode, ShapeMismatch


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce to a C-ordered float64 array, optionally reshaping."""
    t = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        t = t.reshape(shape)
    return t


def as_mask(bits, shape=None) -> np.ndarray:
    m = np.ascontiguousarray(bits, dtype=np.uint8)
    if shape is not None:
        m = m.reshape(shape)
    if m.size and not np.isin(m, (0, 1)).all():
        raise ShapeMismatch("mask entries must be 0 or 1")
    return m


def mask_sparsity(mask: np.ndarray) -> float:
    """Fraction of zeroed entries, in [0, 1]."""
    return 1.0 - float(np.count_nonzero(mask)) / mask.size


def fold(matrix: np.ndarray, target_shape) -> np.ndarray:
    """Relabel a matrix's entries as a higher-order tensor (row-major).

    Bijective: ``unfold_to_matrix`` with the original shape is the exact
    inverse.  No data is changed.
    """
    matrix = np.asarray(matrix)
    target_shape = tuple(int(s) for s in target_shape)
    if math.prod(target_shape) != matrix.size:
        raise ShapeMismatch(
            f"cannot fold {matrix.shape} ({matrix.size} entries) "
            f"into {target_shape}"
        )
    return as_tensor(matrix).reshape(target_shape)


def unfold_to_matrix(t: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`fold`."""
    if rows * cols != t.size:
        raise ShapeMismatch(f"{rows}x{cols} != {t.size} entries")
    return np.ascontiguousarray(t).reshape(rows, cols)


def unfold(t: np.ndarray, n: int) -> np.ndarray:
    """Mode-n unfolding: I_n x (numel / I_n).

    Mode-n fibers become columns; the remaining indices run in their
    natural row-major order along the columns.
    """
    _check_mode(t, n)
    return np.ascontiguousarray(np.moveaxis(t, n, 0)).reshape(t.shape[n], -1)


def fold_back(mat: np.ndarray, n: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for the given original shape."""
    shape = tuple(shape)
    moved = (shape[n],) + shape[:n] + shape[n + 1:]
    return np.ascontiguousarray(np.moveaxis(mat.reshape(moved), 0, n))


def mode_n_product(t: np.ndarray, u: np.ndarray, n: int,
                   keepdims: bool = False) -> np.ndarray:
    """Contract mode n of ``t`` with the columns of matrix ``u`` (J x I_n).

    The result has mode-n size J; when J == 1 the mode is dropped and the
    order decreases by one (unless ``keepdims`` is set, as internal Tucker
    machinery needs).
    """
    _check_mode(t, n)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ShapeMismatch("mode-n factor must be a matrix")
    if u.shape[1] != t.shape[n]:
        raise ShapeMismatch(
            f"matrix columns {u.shape[1]} != mode-{n} size {t.shape[n]}"
        )
    out = np.moveaxis(np.tensordot(u, t, axes=(1, n)), 0, n)
    if u.shape[0] == 1 and not keepdims:
        out = np.squeeze(out, axis=n)
    return np.ascontiguousarray(out)


def outer_rank1(vectors) -> np.ndarray:
    """Outer product of d vectors; entry = product of vector entries."""
    vectors = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if not vectors or any(v.size == 0 for v in vectors):
        raise ShapeMismatch("need at least one nonempty vector")
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return np.ascontiguousarray(np.atleast_1d(out))


def hadamard(a: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Entrywise product of a tensor with a mask (or another tensor)."""
    if a.shape != m.shape:
        raise ShapeMismatch(f"shape {a.shape} != {m.shape}")
    return np.ascontiguousarray(a * np.asarray(m, dtype=np.float64))


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64).ravel()))


def _check_mode(t: np.ndarray, n: int) -> None:
    if not 0 <= n < t.ndim:
        raise InvalidMode(f"mode {n} out of range for order-{t.ndim} tensor")
