"""Dense tensor primitives.

Tensors are plain ``float64`` numpy arrays.  Every flattening in the package
uses column-major order (first index fastest), so ``reshape`` here always
passes ``order="F"``; mixing in C-order reshapes would silently scramble the
core layouts produced by the decompositions.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import IndexOutOfRange, InvalidPermutation, ShapeMismatch

__all__ = [
    "as_tensor",
    "reshape",
    "matricize",
    "dematricize",
    "mode_product",
    "direct_sum",
    "partial_direct_sum",
    "hadamard",
    "kronecker",
    "partial_kronecker",
    "binary_structural",
    "permute_axes",
    "inverse_permutation",
    "superdiagonal",
    "frobenius",
    "balanced_axis_order",
]


def as_tensor(x) -> np.ndarray:
    t = np.asarray(x, dtype=np.float64)
    if t.ndim == 0:
        t = t.reshape(1)
    if any(s < 1 for s in t.shape):
        raise ShapeMismatch(f"mode sizes must be positive, got {t.shape}")
    return t


def frobenius(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(t)))


def reshape(t: np.ndarray, new_shape: Sequence[int]) -> np.ndarray:
    """Relabel ``t`` with ``new_shape`` keeping the column-major data sequence."""
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape)) != t.size or any(s < 1 for s in new_shape):
        raise ShapeMismatch(f"cannot reshape {t.shape} into {new_shape}")
    return np.reshape(t, new_shape, order="F")


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise IndexOutOfRange(f"mode {mode} out of range for order-{t.ndim} tensor")


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding: ``I_mode x prod(other modes)``.

    Columns enumerate the remaining modes in increasing order, first one
    fastest.
    """
    _check_mode(t, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def dematricize(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    shape = tuple(shape)
    if not 0 <= mode < len(shape):
        raise IndexOutOfRange(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1:]
    if m.shape != (shape[mode], int(np.prod(rest))):
        raise ShapeMismatch(f"matrix {m.shape} does not unfold {shape} at mode {mode}")
    return np.moveaxis(np.reshape(m, (shape[mode],) + rest, order="F"), 0, mode)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """``t x_mode m``: contract mode ``mode`` of ``t`` with the columns of ``m``."""
    _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ShapeMismatch(
            f"matrix {m.shape} cannot act on mode {mode} of size {t.shape[mode]}"
        )
    out = np.tensordot(m, t, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Block-diagonal placement of ``a`` and ``b``; every mode size adds."""
    if a.ndim != b.ndim:
        raise ShapeMismatch(f"direct sum needs equal order, got {a.ndim} and {b.ndim}")
    out = np.zeros(tuple(x + y for x, y in zip(a.shape, b.shape)))
    out[tuple(slice(0, s) for s in a.shape)] = a
    out[tuple(slice(x, None) for x in a.shape)] = b
    return out


def partial_direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column concatenation of two factor matrices sharing their rows."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"partial direct sum needs shared rows: {a.shape}, {b.shape}")
    return np.hstack([a, b])


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatch(f"Hadamard product needs equal shapes: {a.shape}, {b.shape}")
    return a * b


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; combined index along each mode is ``i * J + j``."""
    if a.ndim != b.ndim:
        raise ShapeMismatch(f"Kronecker product needs equal order, got {a.ndim} and {b.ndim}")
    return np.kron(a, b)


def partial_kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product of two factor matrices sharing their rows."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"partial Kronecker needs shared rows: {a.shape}, {b.shape}")
    return np.einsum("ia,ib->iab", a, b).reshape(a.shape[0], a.shape[1] * b.shape[1])


_STRUCTURAL = {
    "direct_sum": direct_sum,
    "partial_direct_sum": partial_direct_sum,
    "hadamard": hadamard,
    "kronecker": kronecker,
    "partial_kronecker": partial_kronecker,
}


def binary_structural(kind: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        fn = _STRUCTURAL[kind]
    except KeyError:
        raise ValueError(f"unknown structural operation {kind!r}") from None
    return fn(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def _check_perm(perm: Sequence[int], n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise InvalidPermutation(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def permute_axes(t: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Axis permutation with ``np.transpose`` semantics (result axis j = axis perm[j])."""
    perm = _check_perm(perm, t.ndim)
    return np.ascontiguousarray(np.transpose(t, perm))


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    perm = _check_perm(perm, len(perm))
    return tuple(int(i) for i in np.argsort(perm))


def superdiagonal(size: int, order: int = 3, value: float = 1.0) -> np.ndarray:
    t = np.zeros((size,) * order)
    idx = np.arange(size)
    t[(idx,) * order] = value
    return t


def balanced_axis_order(shape: Sequence[int]) -> tuple[int, ...]:
    """Axis order that puts large modes at the ends and small ones inside.

    Sorting by size (ties by index) and dealing axes alternately to the
    front and back gives e.g. ``(600, 600, 3) -> (600, 3, 600)``, which keeps
    the middle TT-ranks of image stacks low.
    """
    order = sorted(range(len(shape)), key=lambda k: (-int(shape[k]), k))
    front, back = [], []
    for j, k in enumerate(order):
        (front if j % 2 == 0 else back).append(k)
    return tuple(front + back[::-1])
