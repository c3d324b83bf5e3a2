"""Arithmetic on shares: Tucker and TT operations, TT-matrix products, rounding.

The rounding sweep is split into per-core step functions
(:func:`round_orth_step`, :func:`round_absorb`, :func:`round_compress_step`)
so that the dispersed protocol runs exactly the same floating-point code on
each server as :func:`tt_round` does in-process.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .decomp import DecompositionReport, sweep_step
from .errors import InvalidThreshold, ShapeMismatch
from .formats import TTMatrixRepresentation, TTRepresentation, TuckerRepresentation
from .linalg import lq_factor, resolve_seed
from .tensor import direct_sum, kronecker, partial_direct_sum, partial_kronecker

__all__ = [
    "tucker_binary",
    "tt_add",
    "tt_hadamard",
    "tt_matvec",
    "tt_inner",
    "tt_quadratic_form",
    "tt_scale",
    "identity_tt_matrix",
    "tt_round",
    "rerandomize",
    "round_orth_step",
    "round_absorb",
    "round_compress_step",
    "add_cores",
    "hadamard_cores",
]

TUCKER_KINDS = ("add", "direct_sum", "hadamard", "kronecker")


def tucker_binary(kind: str, a: TuckerRepresentation, b: TuckerRepresentation) -> TuckerRepresentation:
    """Tucker share arithmetic, one construction per ``kind``.

    ``add``: core direct sum, factor partial direct sums.
    ``direct_sum``: core and factor direct sums.
    ``hadamard``: core Kronecker, factor partial (row-wise) Kroneckers.
    ``kronecker``: core and factor Kroneckers.
    """
    if kind not in TUCKER_KINDS:
        raise ValueError(f"unknown Tucker operation {kind!r}; expected one of {TUCKER_KINDS}")
    if a.order != b.order:
        raise ShapeMismatch(f"operands have orders {a.order} and {b.order}")
    if kind in ("add", "hadamard") and a.mode_sizes != b.mode_sizes:
        raise ShapeMismatch(f"{kind} needs equal mode sizes: {a.mode_sizes} vs {b.mode_sizes}")
    if kind == "add":
        core = direct_sum(a.core, b.core)
        factors = [partial_direct_sum(x, y) for x, y in zip(a.factors, b.factors)]
    elif kind == "direct_sum":
        core = direct_sum(a.core, b.core)
        factors = [direct_sum(x, y) for x, y in zip(a.factors, b.factors)]
    elif kind == "hadamard":
        core = kronecker(a.core, b.core)
        factors = [partial_kronecker(x, y) for x, y in zip(a.factors, b.factors)]
    else:
        core = kronecker(a.core, b.core)
        factors = [kronecker(x, y) for x, y in zip(a.factors, b.factors)]
    return TuckerRepresentation(core, factors)


def _check_same_modes(a, b) -> None:
    if a.mode_sizes != b.mode_sizes:
        raise ShapeMismatch(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")


def add_cores(x: np.ndarray, y: np.ndarray, position: str) -> np.ndarray:
    """Core ``k`` of a TT sum; ``position`` is ``first``, ``middle``, ``last`` or ``only``."""
    if position == "only":
        return x + y
    if position == "first":
        return np.concatenate([x, y], axis=2)
    if position == "last":
        return np.concatenate([x, y], axis=0)
    ra, i, rb = x.shape
    rc, _, rd = y.shape
    out = np.zeros((ra + rc, i, rb + rd))
    out[:ra, :, :rb] = x
    out[ra:, :, rb:] = y
    return out


def _position(k: int, n: int) -> str:
    if n == 1:
        return "only"
    return "first" if k == 0 else "last" if k == n - 1 else "middle"


def tt_add(a: TTRepresentation, b: TTRepresentation) -> TTRepresentation:
    _check_same_modes(a, b)
    n = a.order
    return TTRepresentation(
        [add_cores(x, y, _position(k, n)) for k, (x, y) in enumerate(zip(a.cores, b.cores))]
    )


def hadamard_cores(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Slice-wise Kronecker product of two TT cores."""
    ra, i, rb = x.shape
    rc, _, rd = y.shape
    return np.einsum("aib,cid->acibd", x, y).reshape(ra * rc, i, rb * rd)


def tt_hadamard(a: TTRepresentation, b: TTRepresentation) -> TTRepresentation:
    _check_same_modes(a, b)
    return TTRepresentation([hadamard_cores(x, y) for x, y in zip(a.cores, b.cores)])


def tt_scale(a: TTRepresentation, c: float) -> TTRepresentation:
    cores = [g.copy() for g in a.cores]
    cores[0] = cores[0] * c
    return TTRepresentation(cores)


def tt_matvec(m: TTMatrixRepresentation, x: TTRepresentation) -> TTRepresentation:
    """Apply a TT-matrix to a TT vector core by core."""
    if m.col_sizes != x.mode_sizes:
        raise ShapeMismatch(f"operator columns {m.col_sizes} do not match vector modes {x.mode_sizes}")
    cores = []
    for g, h in zip(m.cores, x.cores):
        ra, i, _, rb = g.shape
        rc, _, rd = h.shape
        cores.append(np.einsum("aijb,cjd->acibd", g, h).reshape(ra * rc, i, rb * rd))
    return TTRepresentation(cores)


def tt_inner(a: TTRepresentation, b: TTRepresentation) -> float:
    _check_same_modes(a, b)
    w = np.ones((1, 1))
    for x, y in zip(a.cores, b.cores):
        w = np.einsum("ab,aic,bid->cd", w, x, y, optimize=True)
    return float(w[0, 0])


def tt_quadratic_form(m: TTMatrixRepresentation, x: TTRepresentation) -> float:
    """``xᵀ M x`` without leaving TT format."""
    return tt_inner(x, tt_matvec(m, x))


def identity_tt_matrix(sizes: Sequence[int]) -> TTMatrixRepresentation:
    return TTMatrixRepresentation([np.eye(int(i)).reshape(1, i, i, 1) for i in sizes])


# ---------------------------------------------------------------------------
# rounding


def _canon(x: np.ndarray) -> np.ndarray:
    # one memory layout for every input, so results do not depend on where
    # an array came from (decoded blob vs in-process)
    return np.asfortranarray(x, dtype=np.float64)


def round_orth_step(core: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-orthogonalize one core.

    Returns ``(q_core, l)`` with ``core = l ×_1 q_core``; ``q_core`` reshaped
    to ``[r, I R]`` has orthonormal rows and ``l`` is ``R_prev x r``.
    """
    core = _canon(core)
    rp, i, rn = core.shape
    l, q = lq_factor(core.reshape(rp, i * rn, order="F"))
    return _canon(q.reshape(q.shape[0], i, rn, order="F")), _canon(l)


def round_absorb(core: np.ndarray, l: np.ndarray) -> np.ndarray:
    """``core ×_3 lᵀ``: fold the neighbour's triangular factor into this core."""
    core, l = _canon(core), _canon(l)
    rp, i, rn = core.shape
    out = core.reshape(rp * i, rn, order="F") @ l
    return _canon(out.reshape(rp, i, l.shape[1], order="F"))


def round_compress_step(
    core: np.ndarray,
    carry: np.ndarray | None,
    frame: list[np.ndarray] | None,
    rel_tol: float,
    randomize: bool,
    delta: float,
    seed: int | None,
    step: int,
    last: bool,
):
    """One left-to-right compression step on core ``step - 1``.

    ``carry`` (``r_in x R_prev``) from the left neighbour is multiplied in
    first.  For the last core the result is the finished core; otherwise
    returns ``(new_core, carry_out, frame_out, record, err2)``.
    """
    core = _canon(core)
    if carry is not None:
        carry = _canon(carry)
        rp, i, rn = core.shape
        core = _canon((carry @ core.reshape(rp, i * rn, order="F")).reshape(
            carry.shape[0], i, rn, order="F"))
    if last:
        return core, None, None, None, 0.0
    rp, i, rn = core.shape
    frame = None if frame is None else [_canon(p) for p in frame]
    st = sweep_step(core.reshape(rp * i, rn, order="F"), frame, rel_tol, None,
                    randomize, delta, seed, step)
    new_core = _canon(st.core.reshape(rp, i, st.rank, order="F"))
    frame_out = None if st.frame is None else [_canon(p) for p in st.frame]
    return new_core, _canon(st.carry), frame_out, st.record, st.err2


def tt_round(
    a: TTRepresentation,
    eps: float,
    randomize: bool = True,
    delta: float = 0.05,
    seed: int | None = None,
    return_report: bool = False,
):
    """(Randomized) TT-rounding with ``||A - Â|| <= eps ||A||``.

    Right-to-left orthogonalization by LQ, then a left-to-right truncated
    SVD sweep with tolerance ``eps / sqrt(N - 1)``.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidThreshold(f"error threshold must lie in (0, 1), got {eps}")
    if randomize and not 0.0 < delta <= 1.0:
        raise InvalidThreshold(f"perturbation threshold must lie in (0, 1], got {delta}")
    n = a.order
    seed = resolve_seed(seed) if randomize else seed
    report = DecompositionReport("tt", None, randomize, seed, delta if randomize else None, eps)
    cores = [_canon(c) for c in a.cores]
    if n == 1:
        out = TTRepresentation(cores)
        report.ranks = out.ranks
        return (out, report) if return_report else out

    for k in range(n - 1, 0, -1):
        cores[k], l = round_orth_step(cores[k])
        cores[k - 1] = round_absorb(cores[k - 1], l)

    tol = eps / math.sqrt(n - 1)
    carry, frame, err2 = None, None, 0.0
    for k in range(n):
        cores[k], carry, frame, rec, e2 = round_compress_step(
            cores[k], carry, frame, tol, randomize, delta, seed, k + 1, k == n - 1
        )
        err2 += e2
        if rec is not None:
            report.perturbations.append(rec)
    out = TTRepresentation(cores)
    report.ranks = out.ranks
    report.truncation_error = math.sqrt(err2)
    return (out, report) if return_report else out


def rerandomize(a: TTRepresentation, delta: float = 0.05, seed: int | None = None) -> TTRepresentation:
    """Fresh perturbations for existing shares via near-lossless rounding.

    Useful between dispersed operations so that consecutive share versions
    are not related by a deterministic map.
    """
    return tt_round(a, 1e-12, randomize=True, delta=delta, seed=seed)
