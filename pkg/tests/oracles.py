"""Independent brute-force reference implementations.

Everything here is written with explicit index loops (or the most literal
formula available) and shares no code with the package, so agreement with
the package is evidence rather than tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def tt_entry(cores, idx) -> float:
    """Entry of a TT/TR tensor: trace of the product of the index slices."""
    m = np.eye(cores[0].shape[0])
    for g, i in zip(cores, idx):
        m = m @ g[:, i, :]
    return float(np.trace(m))


def tt_full(cores) -> np.ndarray:
    shape = tuple(g.shape[1] for g in cores)
    out = np.empty(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        out[idx] = tt_entry(cores, idx)
    return out


def tucker_full(core, factors) -> np.ndarray:
    shape = tuple(u.shape[0] for u in factors)
    out = np.zeros(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        acc = 0.0
        for r in itertools.product(*(range(s) for s in core.shape)):
            w = core[r]
            for k, (i, rk) in enumerate(zip(idx, r)):
                w *= factors[k][i, rk]
            acc += w
        out[idx] = acc
    return out


def mode_product(t, m, mode):
    shape = list(t.shape)
    shape[mode] = m.shape[0]
    out = np.zeros(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        acc = 0.0
        for j in range(t.shape[mode]):
            src = list(idx)
            src[mode] = j
            acc += m[idx[mode], j] * t[tuple(src)]
        out[idx] = acc
    return out


def kronecker(a, b):
    shape = tuple(x * y for x, y in zip(a.shape, b.shape))
    out = np.empty(shape)
    for ia in itertools.product(*(range(s) for s in a.shape)):
        for ib in itertools.product(*(range(s) for s in b.shape)):
            out[tuple(i * sb + j for i, j, sb in zip(ia, ib, b.shape))] = a[ia] * b[ib]
    return out


def direct_sum(a, b):
    out = np.zeros(tuple(x + y for x, y in zip(a.shape, b.shape)))
    for ia in itertools.product(*(range(s) for s in a.shape)):
        out[ia] = a[ia]
    for ib in itertools.product(*(range(s) for s in b.shape)):
        out[tuple(j + sa for j, sa in zip(ib, a.shape))] = b[ib]
    return out


def partial_kronecker(a, b):
    rows = a.shape[0]
    out = np.empty((rows, a.shape[1] * b.shape[1]))
    for r in range(rows):
        for i in range(a.shape[1]):
            for j in range(b.shape[1]):
                out[r, i * b.shape[1] + j] = a[r, i] * b[r, j]
    return out


def frob(x) -> float:
    return math.sqrt(sum(float(v) * float(v) for v in np.ravel(x)))


def l2_dissimilarity(xs, ys) -> float:
    total = 0.0
    for x, y in zip(xs, ys):
        total += frob(np.asarray(x) - np.asarray(y)) / frob(x)
    return total / len(xs)


def pearson_abs(a, b, axis):
    out = []
    for r in range(a.shape[axis]):
        x = np.take(a, r, axis=axis).ravel().tolist()
        y = np.take(b, r, axis=axis).ravel().tolist()
        n = len(x)
        mx, my = sum(x) / n, sum(y) / n
        sxy = sum((u - mx) * (v - my) for u, v in zip(x, y))
        sxx = sum((u - mx) ** 2 for u in x)
        syy = sum((v - my) ** 2 for v in y)
        out.append(float("nan") if sxx == 0 or syy == 0 else abs(sxy) / math.sqrt(sxx * syy))
    return np.array(out)


def _bin(v, lo, hi, bins):
    if v == hi:
        return bins - 1
    return min(int((v - lo) / (hi - lo) * bins), bins - 1)


def histogram_counts(x, bins):
    x = np.ravel(x).tolist()
    lo, hi = min(x), max(x)
    counts = [0] * bins
    for v in x:
        counts[0 if lo == hi else _bin(v, lo, hi, bins)] += 1
    return np.array(counts)


def nmi(x, y, bins) -> float:
    x, y = np.ravel(x, order="F").tolist(), np.ravel(y, order="F").tolist()
    n = len(x)
    lx, hx = min(x), max(x)
    ly, hy = min(y), max(y)
    joint: dict = {}
    for u, v in zip(x, y):
        key = (_bin(u, lx, hx, bins), _bin(v, ly, hy, bins))
        joint[key] = joint.get(key, 0) + 1
    px: dict = {}
    py: dict = {}
    for (i, j), c in joint.items():
        px[i] = px.get(i, 0) + c
        py[j] = py.get(j, 0) + c

    def h(counts):
        return -sum(c / n * math.log(c / n) for c in counts)

    hxv, hyv = h(px.values()), h(py.values())
    mi = hxv + hyv - h(joint.values())
    return 2 * mi / (hxv + hyv)


def tt_param_count(mode_sizes, ranks) -> int:
    """Storage of a TT/TR: sum over cores of R_{k-1} I_k R_k."""
    return sum(ranks[k] * mode_sizes[k] * ranks[k + 1] for k in range(len(mode_sizes)))


def tucker_param_count(mode_sizes, ranks) -> int:
    """Storage of a Tucker model: the core plus every I_k x R_k factor."""
    return math.prod(ranks) + sum(i * r for i, r in zip(mode_sizes, ranks))
