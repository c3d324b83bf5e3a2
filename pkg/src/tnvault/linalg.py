"""Matrix factorizations and perturbation sampling."""
from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidThreshold, NumericalFailure, ShapeMismatch

__all__ = [
    "SVDResult",
    "PerturbationRecord",
    "FrameTruncation",
    "svd",
    "svd_of_product",
    "truncated_svd",
    "lq_factor",
    "resolve_seed",
    "perturbation_rng",
    "sample_perturbation",
    "frame_truncation",
    "advance_frame",
]


@dataclass(frozen=True)
class SVDResult:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.S.shape[0])

    @property
    def Vt(self) -> np.ndarray:
        return self.V.T

    def product(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


@dataclass(frozen=True)
class PerturbationRecord:
    """Diagonal of one perturbation matrix, entries in ``[delta, 1]``."""

    values: np.ndarray
    step: int
    seed: int
    delta: float
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "label": self.label,
            "seed": self.seed,
            "delta": self.delta,
            "values": [float(v) for v in self.values],
        }


def _canonical_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of every U column made nonnegative
    if u.size == 0:
        return u, vt
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduced SVD with canonical signs. Returns ``(U, S, Vt)``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeMismatch(f"SVD needs a nonempty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalFailure("SVD input contains non-finite values")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    u, vt = _canonical_signs(u, vt)
    return u, s, vt


def svd_of_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD of ``a @ b`` without forming the product.

    Goes through ``a = Qa Ra`` and ``b = Lb Qb`` so only a small inner matrix
    is decomposed.  Same sign convention as :func:`svd`.
    """
    qa, ra = np.linalg.qr(np.asarray(a, dtype=np.float64), mode="reduced")
    lb, qb = lq_factor(b)
    u, s, vt = np.linalg.svd(ra @ lb, full_matrices=False)
    u, vt = _canonical_signs(qa @ u, vt @ qb)
    return u, s, vt


def _tail_energy(s2: np.ndarray) -> np.ndarray:
    """``tail[r] = sum(s2[r:])`` for r = 0..len(s2)."""
    tail = np.zeros(len(s2) + 1)
    tail[:-1] = np.cumsum(s2[::-1])[::-1]
    return tail


def _rank_from_tail(tail: np.ndarray, threshold2: float, max_rank: int | None) -> int:
    n = len(tail) - 1
    ok = np.nonzero(tail[1:] <= threshold2)[0]
    r = int(ok[0]) + 1 if ok.size else n
    if max_rank is not None:
        r = min(r, int(max_rank))
    return max(1, min(r, n))


def truncated_svd(
    m: np.ndarray, rank: int | None = None, rel_tol: float | None = None
) -> SVDResult:
    """Truncated SVD by fixed rank and/or relative tail energy.

    With ``rel_tol`` the smallest ``r`` is kept such that the discarded
    singular values satisfy ``sum(s[r:]**2) <= rel_tol**2 * ||m||_F**2``;
    ``rank`` caps the result.  At least one triple is always kept.
    """
    if rank is None and rel_tol is None:
        raise ValueError("give a fixed rank, a relative tolerance, or both")
    if rank is not None and rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if rel_tol is not None and not 0.0 <= rel_tol < 1.0:
        raise InvalidThreshold(f"relative tolerance must lie in [0, 1), got {rel_tol}")
    u, s, vt = svd(m)
    if rel_tol is None:
        r = max(1, min(int(rank), len(s)))
    else:
        s2 = s * s
        r = _rank_from_tail(_tail_energy(s2), rel_tol**2 * float(s2.sum()), rank)
    return SVDResult(u[:, :r].copy(), s[:r].copy(), vt[:r].T.copy())


def lq_factor(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``m = L @ Q`` with ``Q`` having orthonormal rows and ``diag(L) >= 0``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeMismatch(f"LQ needs a nonempty matrix, got shape {m.shape}")
    try:
        q, r = np.linalg.qr(m.T, mode="reduced")
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"QR did not converge: {exc}") from exc
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    r = r * signs[:, None]
    return r.T.copy(), q.T.copy()


def resolve_seed(seed: int | None) -> int:
    if seed is None:
        return secrets.randbits(63)
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return seed


def perturbation_rng(seed: int, step: int) -> np.random.Generator:
    """Independent stream per (seed, step) so steps can run on different nodes."""
    return np.random.default_rng([int(seed), int(step)])


def sample_perturbation(
    r: int, delta: float, rng: np.random.Generator | int, step: int = 0, label: str = ""
) -> PerturbationRecord:
    """Draw ``r`` diagonal perturbation factors uniformly from ``[delta, 1]``.

    ``rng`` may be a generator or an integer seed; in the latter case the
    stream is ``perturbation_rng(seed, step)``.
    """
    if not (0.0 < delta <= 1.0):
        raise InvalidThreshold(f"perturbation threshold must lie in (0, 1], got {delta}")
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    seed = -1
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = perturbation_rng(seed, step)
    values = rng.uniform(delta, 1.0, size=int(r))
    return PerturbationRecord(values, step, seed, float(delta), label)


@dataclass
class FrameTruncation:
    """Result of :func:`frame_truncation`.

    ``core`` holds the kept left singular vectors, ``coeff`` the coefficients
    that carry the rest of the tensor.  ``frame`` is the list of triangular
    factors of the kept columns in the current metric (``None`` means the
    columns are orthonormal in the true norm).
    """

    core: np.ndarray
    coeff: np.ndarray
    singular_values: np.ndarray
    rank: int
    err2: float
    norm2: float
    frame: list[np.ndarray] | None = field(default=None)


def frame_truncation(
    m: np.ndarray,
    frame: Sequence[np.ndarray] | None,
    rel_tol: float,
    max_rank: int | None = None,
) -> FrameTruncation:
    """Truncated SVD of ``m`` with the error measured through a left frame.

    ``m`` has rows ``(r, i)`` (``r`` fastest, ``R`` values) and its columns are
    split into ``len(frame)`` contiguous blocks.  The true tensor is
    ``sum_a X_a @ m[:, block a]`` for left interfaces ``X_a`` whose Gram
    matrices are ``frame[a].T @ frame[a]`` (acting on ``r``).  The SVD of
    ``m`` itself supplies the basis; the rank is the smallest one whose
    exact induced error ``||A - A_r||`` is at most ``rel_tol * ||A||`` and the
    coefficients are the metric-orthogonal projection onto that basis.  When
    ``frame`` is None the metric is Euclidean and this reduces to the plain
    relative-tail truncated SVD with coefficients ``diag(S) Vt``.
    """
    u, s, vt = svd(m)
    n = len(s)
    if frame is None:
        s2 = s * s
        tail = _tail_energy(s2)
        norm2 = float(s2.sum())
        r = _rank_from_tail(tail, rel_tol**2 * norm2, max_rank)
        return FrameTruncation(
            u[:, :r].copy(), s[:r, None] * vt[:r], s, r, float(tail[r]), norm2, None
        )

    nb = len(frame)
    R = frame[0].shape[0]
    rows, cols = m.shape
    if rows % R or cols % nb:
        raise ShapeMismatch(f"matrix {m.shape} incompatible with frame of rank {R} x {nb}")
    I = rows // R
    c = cols // nb
    # with r fastest, acting on r is a left product on the (R, I*cols) view
    u2 = u.reshape(R, I * n, order="F")
    m3 = m.reshape(R, I, cols, order="F")
    energies = np.zeros((nb, n))
    norm2 = 0.0
    parts = []
    for a, p in enumerate(frame):
        k = (p @ u2).reshape(R * I, n, order="F")
        blk = m3[:, :, a * c:(a + 1) * c].reshape(R, I * c, order="F")
        b = (p @ blk).reshape(R * I, c, order="F")
        q, rq = np.linalg.qr(k, mode="reduced")
        y = q.T @ b
        energies[a] = np.einsum("ij,ij->i", y, y)
        norm2 += float(np.einsum("ij,ij->", b, b))
        parts.append((rq, y))
    tail = _tail_energy(energies.sum(axis=0))
    r = _rank_from_tail(tail, rel_tol**2 * norm2, max_rank)
    coeff = np.empty((r, cols))
    new_frame = []
    for a, (rq, y) in enumerate(parts):
        rr = rq[:r, :r]
        coeff[:, a * c:(a + 1) * c] = scipy.linalg.solve_triangular(rr, y[:r])
        new_frame.append(rr.copy())
    return FrameTruncation(u[:, :r].copy(), coeff, s, r, float(tail[r]), norm2, new_frame)


def advance_frame(
    frame: list[np.ndarray] | None, inv_delta: np.ndarray, n_blocks: int = 1
) -> list[np.ndarray] | None:
    """Frame of the kept columns after they are divided by the perturbation.

    ``frame`` is the ``FrameTruncation.frame`` of the step (``None`` for an
    orthonormal basis), ``inv_delta`` the reciprocal perturbation factors of
    the kept columns.  For an orthonormal basis whose columns interleave
    ``n_blocks`` ring indices (column ``a + n_blocks * r``), block ``a`` gets
    the matching subset.
    """
    if frame is None:
        if np.all(inv_delta == 1.0) and n_blocks == 1:
            return None
        return [np.diag(inv_delta[a::n_blocks]) for a in range(n_blocks)]
    return [p * inv_delta[None, :] for p in frame]
