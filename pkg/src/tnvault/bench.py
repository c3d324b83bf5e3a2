"""Benchmark suites: superdiagonal study, timing table, distortion curve.

Every suite returns a :class:`BenchResult` holding plain row tables that are
written as CSV.  Apart from the wall-clock columns of ``timing``, all output
is a deterministic function of the seed.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .decomp import pad_noise, relative_error, rtd, tr_svd, tt_svd
from .errors import UnknownSuite
from .formats import reconstruct
from .metrics import compression_ratio, core_norm_profile, histogram, l2_dissimilarity
from .synthetic import image_set, spectral_image
from .tensor import balanced_axis_order, permute_axes, superdiagonal

SUITES = ("superdiagonal", "timing", "distortion-curve")

# randomized-over-baseline time ratio and absolute decomposition time allowed
TIMING_MAX_RATIO = 2.5
TIMING_MAX_SECONDS = 5.0


@dataclass
class BenchResult:
    suite: str
    seed: int
    tables: dict[str, list[dict[str, Any]]] = field(default_factory=dict)

    @staticmethod
    def _fmt(v) -> str:
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (list, tuple)):
            return " ".join(str(int(x)) for x in v)
        return str(v)

    def table_csv(self, name: str) -> str:
        rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if rows:
            cols = list(rows[0])
            w.writerow(cols)
            for r in rows:
                w.writerow([self._fmt(r[c]) for c in cols])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> list[Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in self.tables:
            p = d / f"{self.suite}_{name}.csv"
            p.write_text(self.table_csv(name))
            paths.append(p)
        return paths


def _derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint32)[0])


# ---------------------------------------------------------------------------
# superdiagonal


def superdiagonal_suite(seed: int = 0, size: int = 10, pad: int = 2, eps: float = 1e-10,
                        noise: float = 0.05, bins: int = 10) -> BenchResult:
    """TT and rTT of a superdiagonal tensor, with and without noise padding.

    Reports ranks and exactness, the cores themselves, their per-slice norm
    factors, and histograms of the slice-normalized cores.
    """
    res = BenchResult("superdiagonal", seed)
    plain = superdiagonal(size, 3)
    padded = pad_noise(plain, pad, amplitude=noise, seed=_derive_seed(seed, 1))
    summary, cores, norms, hists = [], [], [], []
    for variant, randomize in (("tt", False), ("rtt", True)):
        for is_padded, a in ((False, plain), (True, padded)):
            rep, rpt = tt_svd(a, eps, randomize=randomize, seed=_derive_seed(seed, 2) if randomize else None)
            err = relative_error(a, reconstruct(rep))
            summary.append({
                "variant": variant, "padded": is_padded, "shape": a.shape,
                "ranks": rep.ranks, "rel_error": err, "exact": err <= 1e-10,
            })
            for k, g in enumerate(rep.cores):
                for idx in np.ndindex(*g.shape):
                    cores.append({"variant": variant, "padded": is_padded, "core": k + 1,
                                  "r_left": idx[0] + 1, "i": idx[1] + 1, "r_right": idx[2] + 1,
                                  "value": float(g[idx])})
                prof = core_norm_profile(g)
                for i, f in enumerate(prof.factors):
                    norms.append({"variant": variant, "padded": is_padded, "core": k + 1,
                                  "i": i + 1, "norm_factor": float(f)})
                counts, edges = histogram(prof.normalized, bins)
                for b, c in enumerate(counts):
                    hists.append({"variant": variant, "padded": is_padded, "core": k + 1,
                                  "bin": b + 1, "lo": float(edges[b]), "hi": float(edges[b + 1]),
                                  "count": int(c)})
    res.tables = {"summary": summary, "cores": cores, "norm_factors": norms, "histograms": hists}
    return res


# ---------------------------------------------------------------------------
# timing


def _timed(fn: Callable[[], Any], repeats: int) -> tuple[float, Any]:
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def timing_configs(seed: int):
    """(format, baseline name, randomized name, decomposer) on the 600x3x600 layout."""
    s = _derive_seed(seed, 3)
    return [
        ("tucker", "HOSVD", "rTD", lambda a, r: rtd(a, (350, 3, 350), randomize=r, seed=s)[0]),
        ("tt", "TT", "rTT", lambda a, r: tt_svd(a, 1e-12, randomize=r, seed=s, max_ranks=(350, 350))[0]),
        ("tr", "TR", "rTR", lambda a, r: tr_svd(a, 1e-12, randomize=r, seed=s, max_ranks=(400, 45))[0]),
    ]


def timing_suite(seed: int = 0, repeats: int = 3, image: np.ndarray | None = None) -> BenchResult:
    """Decompose/reconstruct seconds for the three formats, baseline vs randomized.

    The image (600x600x3 spectral stand-in unless given) is permuted to the
    balanced 600x3x600 layout first.  Times are the best of ``repeats`` runs;
    the check columns compare the randomized/baseline ratio against
    ``TIMING_MAX_RATIO`` and the decomposition time against ``TIMING_MAX_SECONDS``.
    """
    res = BenchResult("timing", seed)
    if image is None:
        image = spectral_image(seed=_derive_seed(seed, 4))
    perm = balanced_axis_order(image.shape)
    a = permute_axes(image, perm)
    rows = []
    for fmt, base_name, rand_name, fn in timing_configs(seed):
        t_base, rep_base = _timed(lambda: fn(a, False), repeats)
        t_rand, rep_rand = _timed(lambda: fn(a, True), repeats)
        for name, t_dec, rep, randomized in ((base_name, t_base, rep_base, False),
                                             (rand_name, t_rand, rep_rand, True)):
            t_rec, full = _timed(lambda: reconstruct(rep), repeats)
            ratio = t_rand / t_base
            rows.append({
                "algorithm": name, "format": fmt, "randomized": randomized,
                "decompose_seconds": t_dec, "reconstruct_seconds": t_rec,
                "compression_ratio": compression_ratio(rep), "rel_error": relative_error(a, full),
                "time_ratio": ratio if randomized else 1.0,
                "ratio_ok": (ratio <= TIMING_MAX_RATIO) if randomized else True,
                "time_ok": t_dec < TIMING_MAX_SECONDS,
            })
    res.tables = {"table": rows}
    return res


# ---------------------------------------------------------------------------
# distortion curve

CURVE_EPS = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2)


def _curve_algorithms():
    return [
        ("HOSVD", lambda a, e, s: rtd(a, eps=e, randomize=False)[0]),
        ("rTD", lambda a, e, s: rtd(a, eps=e, randomize=True, seed=s)[0]),
        ("TT", lambda a, e, s: tt_svd(a, e, randomize=False)[0]),
        ("rTT", lambda a, e, s: tt_svd(a, e, randomize=True, seed=s)[0]),
        ("TR", lambda a, e, s: tr_svd(a, e, randomize=False)[0]),
        ("rTR", lambda a, e, s: tr_svd(a, e, randomize=True, seed=s)[0]),
    ]


def distortion_curve_suite(seed: int = 0, n_images: int = 4, size: int = 64,
                           eps_values=CURVE_EPS) -> BenchResult:
    """Normalized L2 dissimilarity against compression ratio for six variants."""
    res = BenchResult("distortion-curve", seed)
    imgs = image_set(n_images, size, size, 3, seed=_derive_seed(seed, 5))
    perm = balanced_axis_order(imgs[0].shape)
    imgs = [permute_axes(x, perm) for x in imgs]
    rows = []
    for ai, (name, fn) in enumerate(_curve_algorithms()):
        for ei, eps in enumerate(eps_values):
            recons, ratios = [], []
            for ii, a in enumerate(imgs):
                rep = fn(a, eps, _derive_seed(seed, 6, ai, ei, ii))
                recons.append(reconstruct(rep))
                ratios.append(compression_ratio(rep))
            rows.append({
                "algorithm": name, "eps": float(eps),
                "compression_ratio": float(np.mean(ratios)),
                "l2_dissimilarity": l2_dissimilarity(imgs, recons),
            })
    res.tables = {"curve": rows}
    return res


def run_suite(name: str, seed: int = 0, **kwargs) -> BenchResult:
    suites = {
        "superdiagonal": superdiagonal_suite,
        "timing": timing_suite,
        "distortion-curve": distortion_curve_suite,
    }
    if name not in suites:
        raise UnknownSuite(f"unknown bench suite {name!r}; expected one of {SUITES}")
    return suites[name](seed=seed, **kwargs)
