"""Fidelity and leakage measurements on tensors and shares."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DegenerateRange, IndexOutOfRange, ShapeMismatch, ZeroNormOriginal
from .formats import HTRepresentation, TuckerRepresentation, num_params
from .tensor import as_tensor

__all__ = [
    "MetricReport",
    "l2_dissimilarity",
    "pearson_per_rank",
    "nmi",
    "histogram",
    "compression_ratio",
    "core_norm_profile",
    "CoreNormProfile",
    "DEFAULT_NMI_BINS",
]

DEFAULT_NMI_BINS = 256


@dataclass
class MetricReport:
    """One metric evaluation.  ``values`` may hold NaN for undefined entries."""

    metric: str
    values: list[float]
    params: dict[str, Any] = field(default_factory=dict)
    operands: list[str] = field(default_factory=list)

    @property
    def scalar(self) -> float:
        if len(self.values) != 1:
            raise ValueError(f"{self.metric} report holds {len(self.values)} values")
        return self.values[0]

    @property
    def undefined(self) -> list[int]:
        return [i for i, v in enumerate(self.values) if not np.isfinite(v)]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "values": [float(v) if np.isfinite(v) else None for v in self.values],
            "undefined": self.undefined,
            "params": self.params,
            "operands": self.operands,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "index", "value"])
        for i, v in enumerate(self.values):
            w.writerow([self.metric, i, repr(float(v)) if np.isfinite(v) else "undefined"])
        return buf.getvalue()

    def write(self, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        stem = stem or self.metric
        p_csv, p_json = d / f"{stem}.csv", d / f"{stem}.json"
        p_csv.write_text(self.to_csv())
        p_json.write_text(self.to_json())
        return p_csv, p_json


def l2_dissimilarity(originals: Sequence[np.ndarray], reconstructions: Sequence[np.ndarray]) -> float:
    """Mean of ``||x_n - x'_n|| / ||x_n||`` over the pairs."""
    originals = [as_tensor(x) for x in originals]
    reconstructions = [as_tensor(x) for x in reconstructions]
    if len(originals) != len(reconstructions):
        raise ShapeMismatch(f"{len(originals)} originals vs {len(reconstructions)} reconstructions")
    if not originals:
        raise ShapeMismatch("no tensors to compare")
    total = 0.0
    for k, (x, y) in enumerate(zip(originals, reconstructions)):
        if x.shape != y.shape:
            raise ShapeMismatch(f"pair {k}: shapes {x.shape} and {y.shape}")
        nx = np.linalg.norm(x.ravel())
        if nx == 0.0:
            raise ZeroNormOriginal(f"original {k} has zero norm")
        total += np.linalg.norm((x - y).ravel()) / nx
    return float(total / len(originals))


def pearson_per_rank(core_a: np.ndarray, core_b: np.ndarray, rank_axis: int) -> np.ndarray:
    """``|corr|`` between matching slices along ``rank_axis``; NaN where a slice is constant."""
    a, b = as_tensor(core_a), as_tensor(core_b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cores have shapes {a.shape} and {b.shape}")
    if not 0 <= rank_axis < a.ndim:
        raise IndexOutOfRange(f"axis {rank_axis} for an order-{a.ndim} core")
    n = a.shape[rank_axis]
    xa = np.moveaxis(a, rank_axis, 0).reshape(n, -1)
    xb = np.moveaxis(b, rank_axis, 0).reshape(n, -1)
    xa = xa - xa.mean(axis=1, keepdims=True)
    xb = xb - xb.mean(axis=1, keepdims=True)
    na = np.linalg.norm(xa, axis=1)
    nb = np.linalg.norm(xb, axis=1)
    out = np.full(n, np.nan)
    ok = (na > 0) & (nb > 0)
    out[ok] = np.abs(np.sum(xa[ok] * xb[ok], axis=1)) / (na[ok] * nb[ok])
    return np.minimum(out, 1.0)


def _bin_edges(x: np.ndarray, bins: int, name: str) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise DegenerateRange(f"{name} is constant ({lo}); no histogram range")
    return np.linspace(lo, hi, bins + 1)


def _entropy(counts: np.ndarray, total: int) -> float:
    # sorted so the sum does not depend on the cell order (keeps nmi symmetric)
    p = np.sort(counts[counts > 0].ravel()) / total
    return float(-np.sum(p * np.log(p)))


def nmi(x: np.ndarray, y: np.ndarray, bins: int = DEFAULT_NMI_BINS) -> float:
    """Normalized mutual information ``2 I(X;Y) / (H(X) + H(Y))``.

    Joint histogram with ``bins`` equal-width bins per variable, each over
    its own min-max range.  Symmetric in ``x`` and ``y``.
    """
    x, y = as_tensor(x).ravel(order="F"), as_tensor(y).ravel(order="F")
    if x.size != y.size:
        raise ShapeMismatch(f"{x.size} vs {y.size} elements")
    if bins < 2:
        raise ValueError(f"nmi needs at least 2 bins, got {bins}")
    joint, _, _ = np.histogram2d(x, y, bins=[_bin_edges(x, bins, "x"), _bin_edges(y, bins, "y")])
    joint = joint.astype(np.int64)
    hx = _entropy(joint.sum(axis=1), x.size)
    hy = _entropy(joint.sum(axis=0), x.size)
    hxy = _entropy(joint, x.size)
    mi = hx + hy - hxy
    # hx + hy > 0 because neither variable is constant, so two bins are occupied
    return float(min(max(2.0 * mi / (hx + hy), 0.0), 1.0))


def histogram(t: np.ndarray, bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Counts and edges of ``bins`` equal-width bins over ``[min, max]``."""
    if bins < 1:
        raise ValueError(f"need at least one bin, got {bins}")
    x = as_tensor(t).ravel()
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        counts = np.zeros(bins, dtype=np.int64)
        counts[0] = x.size
        return counts, np.linspace(lo, lo + 1.0, bins + 1)
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return counts.astype(np.int64), edges


def _mode_sizes(rep) -> list[int]:
    return list(rep.mode_sizes)


def compression_ratio(rep, original_shape: Sequence[int] | None = None) -> float:
    """Stored parameters divided by the number of entries of the full tensor."""
    shape = list(original_shape) if original_shape is not None else _mode_sizes(rep)
    return num_params(rep) / float(np.prod(shape))


@dataclass
class CoreNormProfile:
    factors: np.ndarray  # Frobenius norm of every slice along the mode index
    normalized: np.ndarray  # core with every nonzero slice scaled to unit norm
    zero_slices: list[int]


def core_norm_profile(core: np.ndarray, axis: int = 1) -> CoreNormProfile:
    """Per-slice normalization of one core (slices along its mode index)."""
    core = as_tensor(core)
    if not 0 <= axis < core.ndim:
        raise IndexOutOfRange(f"axis {axis} for an order-{core.ndim} core")
    moved = np.moveaxis(core, axis, 0)
    n = moved.shape[0]
    factors = np.linalg.norm(moved.reshape(n, -1), axis=1)
    zero = [int(i) for i in np.nonzero(factors == 0)[0]]
    scale = np.where(factors > 0, factors, 1.0)
    normalized = np.moveaxis(moved / scale.reshape((n,) + (1,) * (moved.ndim - 1)), 0, axis)
    return CoreNormProfile(factors, normalized, zero)


def rep_norm_profiles(rep) -> list[CoreNormProfile]:
    """Profiles of every core (TT/TR) or factor (Tucker/HT, slices = rows)."""
    if isinstance(rep, (TuckerRepresentation, HTRepresentation)):
        return [core_norm_profile(u, axis=0) for u in rep.factors]
    return [core_norm_profile(g, axis=1) for g in rep.cores]
