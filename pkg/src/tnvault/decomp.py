"""Randomized tensor-network decompositions (TT, TR, Tucker, HT).

Every algorithm runs the classical SVD sweep and, when ``randomize`` is set,
inserts a diagonal perturbation ``Δ`` between each pair of SVD factors: the
stored core/factor gets ``U Δ⁻¹`` and the carried remainder gets ``Δ S Vᵀ``.
The pair cancels in reconstruction, so the shares change with the seed while
the represented tensor does not.

Truncation ranks are chosen from the exact error the cut induces in the full
tensor.  Once a core has been divided by ``Δ`` the already-emitted cores are
no longer orthonormal, so the plain singular-value tail underestimates the
error; the sweeps therefore track a triangular "frame" factor of the emitted
cores and measure the tail in that metric (see ``linalg.frame_truncation``).
Without perturbation the frame is the identity and the sweeps reduce to the
textbook algorithms.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InvalidThreshold, RankSplitFailure, RankTooLarge, ShapeMismatch
from .formats import (
    HTRepresentation,
    TRRepresentation,
    TTRepresentation,
    TuckerRepresentation,
    balanced_tree,
    check_tree,
    internal_nodes,
    tree_leaves,
)
from .linalg import (
    PerturbationRecord,
    advance_frame,
    frame_truncation,
    resolve_seed,
    sample_perturbation,
    svd,
    svd_of_product,
)
from .tensor import as_tensor, dematricize, frobenius, matricize, mode_product

__all__ = [
    "DecompositionReport",
    "SweepStep",
    "sweep_step",
    "split_ring_rank",
    "tt_svd",
    "tr_svd",
    "rtd",
    "rht",
    "pad_noise",
    "relative_error",
]


@dataclass
class DecompositionReport:
    format: str
    ranks: Any
    randomize: bool
    seed: int | None
    delta: float | None
    eps: float | None = None
    perturbations: list[PerturbationRecord] = field(default_factory=list)
    decompose_seconds: float = 0.0
    rel_error: float | None = None
    truncation_error: float = 0.0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        ranks = self.ranks
        if isinstance(ranks, dict):
            ranks = {str(k): int(v) for k, v in ranks.items()}
        elif ranks is not None:
            ranks = [int(r) for r in ranks]
        return {
            "format": self.format,
            "ranks": ranks,
            "randomize": self.randomize,
            "seed": self.seed,
            "delta": self.delta,
            "eps": self.eps,
            "decompose_seconds": self.decompose_seconds,
            "rel_error": self.rel_error,
            "truncation_error": self.truncation_error,
            "notes": list(self.notes),
            "perturbations": [p.to_dict() for p in self.perturbations],
        }


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    na = frobenius(a)
    return frobenius(a - b) / na if na > 0 else frobenius(b)


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise InvalidThreshold(f"error threshold must lie in (0, 1), got {eps}")


def _check_delta(delta: float, randomize: bool) -> None:
    if randomize and not 0.0 < delta <= 1.0:
        raise InvalidThreshold(f"perturbation threshold must lie in (0, 1], got {delta}")


def _caps(max_ranks, n: int) -> list[int | None]:
    if max_ranks is None:
        return [None] * n
    if isinstance(max_ranks, (int, np.integer)):
        return [int(max_ranks)] * n
    caps = [None if r is None else int(r) for r in max_ranks]
    if len(caps) != n:
        raise ShapeMismatch(f"expected {n} rank caps, got {len(caps)}")
    return caps


# ---------------------------------------------------------------------------
# left-to-right sweep step shared by TT-SVD, TR-SVD and TT-rounding


@dataclass
class SweepStep:
    core: np.ndarray  # (R_prev * I) x r, already divided by Δ
    carry: np.ndarray  # r x cols, already multiplied by Δ
    frame: list[np.ndarray] | None
    rank: int
    err2: float
    record: PerturbationRecord | None


def sweep_step(
    m: np.ndarray,
    frame,
    rel_tol: float,
    max_rank: int | None,
    randomize: bool,
    delta: float,
    seed: int,
    step: int,
    n_blocks: int = 1,
) -> SweepStep:
    """One truncate-and-perturb step of a left-to-right sweep.

    ``n_blocks > 1`` is only used for the first ring step, whose kept columns
    interleave the ring bond.
    """
    ft = frame_truncation(m, frame, rel_tol, max_rank)
    if not randomize:
        return SweepStep(ft.core, ft.coeff, ft.frame, ft.rank, ft.err2, None)
    rec = sample_perturbation(ft.rank, delta, seed, step=step)
    d = rec.values
    core = ft.core / d[None, :]
    carry = d[:, None] * ft.coeff
    new_frame = advance_frame(ft.frame, 1.0 / d, n_blocks)
    return SweepStep(core, carry, new_frame, ft.rank, ft.err2, rec)


def _numerical_rank(s: np.ndarray, shape: tuple[int, int]) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 1
    tol = s[0] * max(shape) * np.finfo(np.float64).eps
    return max(1, int(np.count_nonzero(s > tol)))


def _first_core_pass(
    g1: np.ndarray, g2: np.ndarray, delta: float, seed: int
) -> tuple[np.ndarray, np.ndarray, PerturbationRecord]:
    """Re-factor the first two cores with a fresh perturbation.

    The product of the two cores is re-decomposed by SVD; only numerically
    zero singular values are dropped, so the represented tensor is unchanged
    and the first bond rank can only shrink.
    """
    r0, i1, r1 = g1.shape
    _, i2, r2 = g2.shape
    u, s, vt = svd_of_product(
        g1.reshape(r0 * i1, r1, order="F"), g2.reshape(r1, i2 * r2, order="F")
    )
    r = min(r1, _numerical_rank(s, (r0 * i1, i2 * r2)))
    rec = sample_perturbation(r, delta, seed, step=0, label="first-core")
    d = rec.values
    new1 = (u[:, :r] / d[None, :]).reshape(r0, i1, r, order="F")
    new2 = ((d * s[:r])[:, None] * vt[:r]).reshape(r, i2, r2, order="F")
    return new1, new2, rec


def tt_svd(
    a: np.ndarray,
    eps: float,
    randomize: bool = True,
    delta: float = 0.05,
    seed: int | None = None,
    max_ranks: Sequence[int | None] | int | None = None,
) -> tuple[TTRepresentation, DecompositionReport]:
    """(Randomized) TT-SVD with guaranteed ``||A - Â||_F <= eps ||A||_F``.

    ``max_ranks`` optionally caps the N-1 bond ranks; a cap that binds
    overrides the error guarantee.
    """
    t0 = time.perf_counter()
    a = as_tensor(a)
    n = a.ndim
    if n < 2:
        raise ShapeMismatch("TT-SVD needs a tensor of order >= 2")
    _check_eps(eps)
    _check_delta(delta, randomize)
    caps = _caps(max_ranks, n - 1)
    seed = resolve_seed(seed) if randomize else seed
    tol = eps / math.sqrt(n - 1)
    shape = a.shape

    report = DecompositionReport("tt", None, randomize, seed, delta if randomize else None, eps)
    cores = []
    frame = None
    r_prev = 1
    err2 = 0.0
    m = a.reshape(shape[0], -1, order="F")
    for k in range(n - 1):
        st = sweep_step(m, frame, tol, caps[k], randomize, delta, seed, k + 1)
        cores.append(st.core.reshape(r_prev, shape[k], st.rank, order="F"))
        if st.record is not None:
            report.perturbations.append(st.record)
        err2 += st.err2
        frame = st.frame
        r_prev = st.rank
        m = st.carry.reshape(r_prev * shape[k + 1], -1, order="F")
    cores.append(m.reshape(r_prev, shape[-1], 1, order="F"))

    if randomize:
        cores[0], cores[1], rec = _first_core_pass(cores[0], cores[1], delta, seed)
        report.perturbations.insert(0, rec)

    rep = TTRepresentation(cores)
    report.ranks = rep.ranks
    report.truncation_error = math.sqrt(err2)
    report.decompose_seconds = time.perf_counter() - t0
    return rep, report


def split_ring_rank(r: int) -> tuple[int, int]:
    """Factor ``r = R0 * R1`` with ``R0 <= R1`` and ``R1 - R0`` minimal."""
    r = int(r)
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    r0 = int(math.isqrt(r))
    while r % r0:
        r0 -= 1
    return r0, r // r0


def tr_svd(
    a: np.ndarray,
    eps: float,
    randomize: bool = True,
    delta: float = 0.05,
    seed: int | None = None,
    max_ranks: Sequence[int | None] | int | None = None,
    strict_split: bool = False,
) -> tuple[TRRepresentation, DecompositionReport]:
    """(Randomized) tensor-ring SVD.

    The first truncation (tolerance ``sqrt(2) eps / sqrt(N)``) yields rank
    ``R0 * R1``, split as evenly as possible; the others use ``eps / sqrt(N)``.
    ``max_ranks[0]`` caps the product ``R0 * R1``.  A prime first rank can
    only split as ``1 x r``; that is reported in the notes, or raises
    :class:`RankSplitFailure` when ``strict_split`` is set.
    """
    t0 = time.perf_counter()
    a = as_tensor(a)
    n = a.ndim
    if n < 2:
        raise ShapeMismatch("TR-SVD needs a tensor of order >= 2")
    _check_eps(eps)
    _check_delta(delta, randomize)
    caps = _caps(max_ranks, n - 1)
    seed = resolve_seed(seed) if randomize else seed
    shape = a.shape
    report = DecompositionReport("tr", None, randomize, seed, delta if randomize else None, eps)

    m = a.reshape(shape[0], -1, order="F")
    ft = frame_truncation(m, None, math.sqrt(2.0) * eps / math.sqrt(n), caps[0])
    r = ft.rank
    R0, R1 = split_ring_rank(r)
    if R0 == 1 and r > 1:
        msg = f"first rank {r} is prime; ring closes with R0 = 1"
        if strict_split:
            raise RankSplitFailure(msg)
        report.notes.append(msg)
    err2 = ft.err2
    u, c = ft.core, ft.coeff
    frame = None
    if randomize:
        rec = sample_perturbation(r, delta, seed, step=1)
        report.perturbations.append(rec)
        d = rec.values
        u = u / d[None, :]
        c = d[:, None] * c
        frame = advance_frame(None, 1.0 / d, R0)
    # columns of u are (r0, r1) with r0 fastest
    cores = [np.transpose(u.reshape(shape[0], R0, R1, order="F"), (1, 0, 2))]
    # move the ring bond of the carry to the trailing position
    c = c.reshape((R0, R1) + shape[1:], order="F")
    c = np.moveaxis(c, 0, -1)
    r_prev = R1
    m = c.reshape(R1 * shape[1], -1, order="F")
    tol = eps / math.sqrt(n)
    for k in range(1, n - 1):
        st = sweep_step(m, frame, tol, caps[k], randomize, delta, seed, k + 1)
        cores.append(st.core.reshape(r_prev, shape[k], st.rank, order="F"))
        if st.record is not None:
            report.perturbations.append(st.record)
        err2 += st.err2
        frame = st.frame
        r_prev = st.rank
        m = st.carry.reshape(r_prev * shape[k + 1], -1, order="F")
    cores.append(m.reshape(r_prev, shape[-1], R0, order="F"))

    if randomize:
        cores[0], cores[1], rec = _first_core_pass(cores[0], cores[1], delta, seed)
        report.perturbations.insert(0, rec)
        if cores[0].shape[2] != R1:
            report.notes.append(f"first-core pass reduced R1 from {R1} to {cores[0].shape[2]}")

    rep = TRRepresentation(cores)
    report.ranks = rep.ranks
    report.truncation_error = math.sqrt(err2)
    report.decompose_seconds = time.perf_counter() - t0
    return rep, report


# ---------------------------------------------------------------------------
# Tucker / HT


def _psd_sqrt(g: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semidefinite Gram matrix."""
    w, v = np.linalg.eigh((g + g.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _rtd_core(
    a: np.ndarray,
    ranks: Sequence[int | None],
    budgets: Sequence[float | None],
    grams: Sequence[np.ndarray | None],
    randomize: bool,
    delta: float,
    seed: int | None,
    label: str = "",
):
    """Sequential randomized HOSVD.

    Mode ``k`` keeps ``ranks[k]`` columns, or, when ``budgets[k]`` is given,
    the smallest rank whose induced error (in the metric ``grams``) is at
    most ``budgets[k]``, capped by ``ranks[k]``.
    Returns ``(core, factors, records, err2)``.
    """
    n = a.ndim
    g = a
    factors: list[np.ndarray] = []
    cur_grams = list(grams)
    records = []
    err2 = 0.0
    for k in range(n):
        if budgets[k] is not None:
            # Basis from the unfolding weighted by the Gram matrices of the
            # other modes, so the discarded tail is exactly the error in the
            # metric those modes induce.
            y = g
            for j in range(n):
                if j != k and cur_grams[j] is not None:
                    y = mode_product(y, _psd_sqrt(cur_grams[j]), j)
            u, s, _ = svd(matricize(y, k))
        else:
            u, s, _ = svd(matricize(g, k))
        cap = len(s) if ranks[k] is None else min(int(ranks[k]), len(s))
        if budgets[k] is not None:
            tail = np.zeros(len(s) + 1)
            tail[:-1] = np.cumsum((s * s)[::-1])[::-1]
            ok = np.nonzero(tail[1:] <= budgets[k] ** 2)[0]
            r = min(int(ok[0]) + 1 if ok.size else len(s), cap)
            err2 += float(tail[r])
        else:
            r = cap
            err2 += float(np.sum(s[r:] ** 2))
        r = max(1, r)
        uk = u[:, :r]
        if randomize:
            rec = sample_perturbation(r, delta, seed, step=k + 1, label=f"{label}mode{k}")
            records.append(rec)
            d = rec.values
            g = mode_product(g, d[:, None] * uk.T, k)
            fac = uk / d[None, :]
        else:
            g = mode_product(g, uk.T, k)
            fac = uk
        factors.append(fac)
        base = cur_grams[k]
        cur_grams[k] = fac.T @ fac if base is None else fac.T @ base @ fac

    if randomize or (ranks[0] is None and budgets[0] is None):
        # Refactor the first factor (exact).  Randomized runs draw a fresh
        # perturbation for it; an unconstrained first mode also sheds the
        # columns that later truncations made redundant.
        r1 = g.shape[0]
        u, s, vt = svd_of_product(factors[0], matricize(g, 0))
        r = min(r1, len(s))
        d = np.ones(r)
        if randomize:
            rec = sample_perturbation(r, delta, seed, step=0, label=f"{label}first-factor")
            records.insert(0, rec)
            d = rec.values
        factors[0] = u[:, :r] / d[None, :]
        g = dematricize((d * s[:r])[:, None] * vt[:r], 0, (r,) + g.shape[1:])
    return g, factors, records, err2


def rtd(
    a: np.ndarray,
    ranks: Sequence[int] | None = None,
    randomize: bool = True,
    delta: float = 0.05,
    seed: int | None = None,
    eps: float | None = None,
) -> tuple[TuckerRepresentation, DecompositionReport]:
    """Randomized Tucker decomposition (sequential HOSVD).

    Give fixed ``ranks`` or an error threshold ``eps``; with both, the ranks
    act as caps.  In ``eps`` mode each mode gets an error budget of
    ``eps ||A|| / sqrt(N)`` and the mode errors add in quadrature.
    """
    t0 = time.perf_counter()
    a = as_tensor(a)
    n = a.ndim
    _check_delta(delta, randomize)
    if ranks is None and eps is None:
        raise ValueError("rtd needs ranks or eps")
    if ranks is not None:
        ranks = [int(r) for r in ranks]
        if len(ranks) != n:
            raise ShapeMismatch(f"{len(ranks)} ranks for an order-{n} tensor")
        for k, (r, i) in enumerate(zip(ranks, a.shape)):
            if not 1 <= r <= i:
                raise RankTooLarge(f"rank {r} for mode {k} of size {i}")
    else:
        ranks = [None] * n
    budgets: list[float | None] = [None] * n
    if eps is not None:
        _check_eps(eps)
        budgets = [eps * frobenius(a) / math.sqrt(n)] * n
    seed = resolve_seed(seed) if randomize else seed
    core, factors, records, err2 = _rtd_core(
        a, ranks, budgets, [None] * n, randomize, delta, seed
    )
    rep = TuckerRepresentation(core, factors)
    report = DecompositionReport(
        "tucker", rep.ranks, randomize, seed, delta if randomize else None, eps, records
    )
    report.truncation_error = math.sqrt(err2)
    report.decompose_seconds = time.perf_counter() - t0
    return rep, report


def _node_seed(seed: int, idx: int) -> int:
    return int(np.random.SeedSequence([seed, idx]).generate_state(1, np.uint64)[0] >> 1)


def _ht_gram(node, transfer: dict, factors: dict) -> np.ndarray:
    if isinstance(node, int):
        u = factors[node]
        return u.T @ u
    gl = _ht_gram(node[0], transfer, factors)
    gr = _ht_gram(node[1], transfer, factors)
    b = transfer[node]
    return np.einsum("abc,dfe,ad,bf->ce", b, b, gl, gr, optimize=True)


def rht(
    a: np.ndarray,
    tree=None,
    rank_map: int | Mapping | None = None,
    randomize: bool = True,
    delta: float = 0.05,
    seed: int | None = None,
    eps: float | None = None,
) -> tuple[HTRepresentation, DecompositionReport]:
    """Randomized hierarchical Tucker by recursive node-wise ``rtd``.

    ``tree`` is a nested pair structure over 0-based modes (default: balanced,
    left-heavy).  ``rank_map`` is an int applied to every non-root node or a
    mapping from nodes (mode ints for leaves, subtree tuples otherwise) to
    ranks.  Nodes absent from the map keep their full rank, except leaves in
    ``eps`` mode, whose rank is chosen from the error budget.

    In ``eps`` mode the budget ``eps ||A||`` is split evenly over the nodes
    that truncate a leaf (errors of different nodes add by the triangle
    inequality) and within a node over its truncated leaf modes.
    """
    t0 = time.perf_counter()
    a = as_tensor(a)
    n = a.ndim
    if n < 2:
        raise ShapeMismatch("HT needs a tensor of order >= 2")
    _check_delta(delta, randomize)
    tree = check_tree(balanced_tree(n) if tree is None else tree, n)
    if eps is not None:
        _check_eps(eps)
    seed = resolve_seed(seed) if randomize else seed
    report = DecompositionReport("ht", None, randomize, seed, delta if randomize else None, eps)

    def dim(node) -> int:
        return int(np.prod([a.shape[k] for k in tree_leaves(node)]))

    def requested(node):
        if rank_map is None:
            return None
        if isinstance(rank_map, (int, np.integer)):
            return int(rank_map)
        key = node if isinstance(node, int) else tuple(node)
        return rank_map.get(key)

    for k in range(n):
        r = requested(k)
        if r is not None and not 1 <= r <= a.shape[k]:
            raise RankTooLarge(f"leaf rank {r} for mode {k} of size {a.shape[k]}")

    nodes = internal_nodes(tree)
    node_idx = {t: i for i, t in enumerate(nodes)}
    eps_nodes = []
    if eps is not None:
        eps_nodes = [
            t for t in nodes if any(isinstance(c, int) and requested(c) is None for c in t)
        ]
    node_budget = eps * frobenius(a) / max(1, len(eps_nodes)) if eps is not None else None

    leaves = tree_leaves(tree)
    x = np.transpose(a, leaves).reshape(-1, 1, order="F")
    transfer: dict = {}
    factors: dict = {}
    err_total = 0.0

    def process(node, u_node: np.ndarray, context) -> None:
        nonlocal err_total
        left, right = node
        dl, dr = dim(left), dim(right)
        rt = u_node.shape[1]
        xt = u_node.reshape(dl, dr, rt, order="F")
        ranks: list[int | None] = [None, None, rt]
        budgets: list[float | None] = [None, None, None]
        eps_modes = [
            j for j, c in enumerate(node)
            if eps is not None and isinstance(c, int) and requested(c) is None
        ]
        for j, c in enumerate(node):
            r = requested(c)
            if r is not None:
                ranks[j] = r
            elif j in eps_modes:
                budgets[j] = node_budget / math.sqrt(len(eps_modes))
        nseed = _node_seed(seed, node_idx[node]) if randomize else None
        g, facs, recs, err2 = _rtd_core(
            xt, ranks, budgets, [None, None, context], randomize, delta, nseed,
            label=f"node{node_idx[node]}/",
        )
        report.perturbations.extend(recs)
        err_total += math.sqrt(err2)
        b = mode_product(g, facs[2], 2)
        transfer[node] = b
        ul, ur = facs[0], facs[1]
        cw = np.eye(rt) if context is None else context
        if isinstance(left, int):
            factors[left] = ul
        else:
            gr = ur.T @ ur
            ctx = np.einsum("abc,dfe,bf,ce->ad", b, b, gr, cw, optimize=True)
            process(left, ul, ctx if eps is not None else None)
        if isinstance(right, int):
            factors[right] = ur
        else:
            gl = _ht_gram(left, transfer, factors)
            ctx = np.einsum("abc,dfe,ad,ce->bf", b, b, gl, cw, optimize=True)
            process(right, ur, ctx if eps is not None else None)

    process(tree, x, None)
    rep = HTRepresentation(tree, [transfer[t] for t in nodes], [factors[k] for k in range(n)])
    report.ranks = rep.ranks
    report.truncation_error = err_total
    report.decompose_seconds = time.perf_counter() - t0
    return rep, report


def pad_noise(
    a: np.ndarray, pad: Sequence[int] | int, amplitude: float = 1.0, seed: int | None = None
) -> np.ndarray:
    """Embed ``a`` in the leading corner of a larger tensor filled with noise.

    ``pad[k]`` extra indices are appended to mode ``k``; the new entries are
    uniform in ``[-amplitude, amplitude]``.
    """
    a = as_tensor(a)
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    if isinstance(pad, (int, np.integer)):
        pad = [int(pad)] * a.ndim
    pad = [int(p) for p in pad]
    if len(pad) != a.ndim or any(p < 0 for p in pad):
        raise ShapeMismatch(f"need {a.ndim} nonnegative pad sizes, got {pad}")
    shape = tuple(i + p for i, p in zip(a.shape, pad))
    rng = np.random.default_rng(seed)
    out = rng.uniform(-amplitude, amplitude, size=shape)
    out[tuple(slice(0, i) for i in a.shape)] = a
    return out
