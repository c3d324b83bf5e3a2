"""``tnvault`` command line.

Subcommands: ``decompose``, ``reconstruct``, ``metrics``, ``bench``.
Settings come from flags, then ``--config`` (``key = value`` lines), then
built-in defaults; the seed falls back to ``$TNVAULT_SEED``.

Exit codes: 0 success, 1 a benchmark check failed, 2 usage error,
5 unreadable input; every library error class has its own code (see
``tnvault.errors``), e.g. 3 missing fragment, 4 hash mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bench, metrics
from .decomp import pad_noise, relative_error
from .dispersed.transport import read_config
from .errors import TNVaultError
from .formats import reconstruct, rep_blocks
from .io import decode_dt, load_tensor, read_tnc, write_dt, write_tnc
from .sharing import ShareManifest, ShareSet, reconstruct_from_shares, shares_from_rep
from .tensor import balanced_axis_order, permute_axes

log = logging.getLogger("tnvault")

EXIT_BENCH_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 5

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")

DEFAULTS = {
    "delta": 0.05,
    "format": "tt",
    "bins": metrics.DEFAULT_NMI_BINS,
    "assignment": "round_robin",
    "repeats": 3,
    "out": ".",
}


class UsageError(Exception):
    pass


def _ints(text: str | None) -> list[int] | None:
    if text is None or text == "":
        return None
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _resolve(args: argparse.Namespace, config: dict[str, str], key: str, cast=str):
    v = getattr(args, key, None)
    if v is None and key in config:
        v = cast(config[key])
    if v is None and key in DEFAULTS:
        v = DEFAULTS[key]
    return v


def _seed(args: argparse.Namespace, config: dict[str, str]) -> int | None:
    s = _resolve(args, config, "seed", int)
    if s is None and os.environ.get("TNVAULT_SEED"):
        try:
            s = int(os.environ["TNVAULT_SEED"])
        except ValueError:
            raise UsageError(f"TNVAULT_SEED must be an integer, got {os.environ['TNVAULT_SEED']!r}") from None
    return s


def _block_filename(role: str, idx: int) -> str:
    return f"{role}_{idx + 1}.tnc"


# ---------------------------------------------------------------------------
# decompose


def cmd_decompose(args, config) -> int:
    from .decomp import rht, rtd, tr_svd, tt_svd

    fmt = _resolve(args, config, "format")
    eps = _resolve(args, config, "eps", float)
    ranks = _ints(_resolve(args, config, "ranks"))
    delta = _resolve(args, config, "delta", float)
    seed = _seed(args, config)
    randomize = not args.no_randomize
    out = Path(_resolve(args, config, "out"))

    if eps is not None and not 0.0 < eps < 1.0:
        raise UsageError(f"--eps must lie in (0, 1), got {eps}")
    if not 0.0 < delta <= 1.0:
        raise UsageError(f"--delta must lie in (0, 1], got {delta}")
    if fmt in ("tt", "tr") and eps is None:
        raise UsageError(f"--format {fmt} needs --eps (--ranks then act as caps)")
    if fmt in ("tucker", "ht") and eps is None and ranks is None:
        raise UsageError(f"--format {fmt} needs --ranks or --eps")

    path = Path(args.input)
    a = load_tensor(path)
    structure_extra: dict = {"source": path.name, "original_shape": list(a.shape)}
    balance = args.balance if args.balance is not None else path.suffix.lower() in IMAGE_SUFFIXES
    if balance and a.ndim > 2:
        perm = balanced_axis_order(a.shape)
        if list(perm) != list(range(a.ndim)):
            a = permute_axes(a, perm)
            structure_extra["axis_perm"] = list(perm)
            log.info("permuted axes %s to balance the shape: %s", perm, a.shape)
    if args.pad:
        pad = _ints(args.pad)
        pad = pad * a.ndim if len(pad) == 1 else pad
        structure_extra["pad"] = pad
        structure_extra["unpadded_shape"] = list(a.shape)
        a = pad_noise(a, pad, amplitude=args.pad_amplitude, seed=seed)

    t0 = time.perf_counter()
    if fmt == "tt":
        rep, report = tt_svd(a, eps, randomize, delta, seed, max_ranks=ranks)
    elif fmt == "tr":
        rep, report = tr_svd(a, eps, randomize, delta, seed, max_ranks=ranks)
    elif fmt == "tucker":
        rep, report = rtd(a, ranks, randomize, delta, seed, eps=eps)
    elif fmt == "ht":
        rank_map = None if ranks is None else (ranks[0] if len(ranks) == 1 else None)
        if ranks is not None and len(ranks) > 1:
            raise UsageError("--format ht takes a single --ranks value (all nodes)")
        rep, report = rht(a, None, rank_map, randomize, delta, seed, eps=eps)
    else:
        raise UsageError(f"unknown format {fmt!r}")
    t_dec = time.perf_counter() - t0
    t0 = time.perf_counter()
    full = reconstruct(rep)
    t_rec = time.perf_counter() - t0

    n_blocks = len(rep_blocks(rep))
    n_servers = args.servers or n_blocks
    permute = bool(args.permute_modes)
    pseeds = None
    if permute:
        ss = np.random.SeedSequence([report.seed if report.seed is not None else 0, 0x9E3779B9])
        pseeds = [int(s) for s in ss.generate_state(a.ndim, np.uint32)]
    shares, manifest = shares_from_rep(
        rep, n_servers, pseeds, _resolve(args, config, "assignment"), report.seed, structure_extra
    )

    out.mkdir(parents=True, exist_ok=True)
    (out / "cores").mkdir(exist_ok=True)
    shares.save(out / "fragments")
    manifest.save(out / "manifest.json")
    st = manifest.structure
    for f in manifest.fragments:
        arr = decode_dt(shares.fragments[f.fragment_id])
        meta = {
            "format": manifest.scheme, "role": f.role, "core_index": f.core_index,
            "ranks": st["ranks"], "mode_sizes": st["mode_sizes"],
            "server_id": f.server_id, "fragment_id": f.fragment_id, "shape": list(f.shape),
        }
        if manifest.scheme == "ht":
            meta["tree"] = st["tree"]
            meta["node_ranks"] = st["node_ranks"]
        write_tnc(out / "cores" / _block_filename(f.role, f.core_index), arr, meta)
    report.decompose_seconds = t_dec
    report.rel_error = relative_error(a, full)
    rdict = report.to_dict()
    rdict.update(
        reconstruct_seconds=t_rec,
        compression_ratio=metrics.compression_ratio(rep),
        num_params=int(rep.num_params()),
        shape=list(a.shape),
        axis_perm=structure_extra.get("axis_perm"),
        n_servers=n_servers,
    )
    (out / "report.json").write_text(json.dumps(rdict, sort_keys=True, indent=2) + "\n")
    ranks_txt = rdict["ranks"] if not isinstance(rdict["ranks"], dict) else sorted(rdict["ranks"].items())
    print(f"format={fmt} shape={tuple(a.shape)} ranks={ranks_txt} "
          f"compression_ratio={rdict['compression_ratio']:.6f} rel_error={report.rel_error:.6e} "
          f"seed={report.seed}")
    return 0


# ---------------------------------------------------------------------------
# reconstruct


def cmd_reconstruct(args, config) -> int:
    mpath = Path(args.manifest)
    manifest = ShareManifest.load(mpath)
    frag_dir = Path(args.fragments) if args.fragments else mpath.parent / "fragments"
    shares = ShareSet.load(frag_dir, manifest)
    t = reconstruct_from_shares(manifest, shares, undo_axis_perm=not args.keep_axis_perm)
    pad = manifest.structure.get("pad")
    if pad and not args.keep_padding:
        shape = manifest.structure["unpadded_shape"]
        perm = manifest.structure.get("axis_perm")
        if perm is not None and not args.keep_axis_perm:
            shape = [shape[perm.index(k)] for k in range(len(shape))]
        t = t[tuple(slice(0, s) for s in shape)]
    out = Path(args.output) if args.output else mpath.parent / "reconstruction.dt"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dt(out, t)
    print(f"wrote {out} shape={tuple(t.shape)}")
    if args.verify:
        orig = load_tensor(args.verify)
        if orig.shape != t.shape:
            raise UsageError(f"--verify tensor has shape {orig.shape}, reconstruction {t.shape}")
        print(f"relative_error={metrics.l2_dissimilarity([orig], [t])!r}")
    return 0


# ---------------------------------------------------------------------------
# metrics


def _load_operand(path: str) -> np.ndarray:
    p = Path(path)
    if p.suffix.lower() == ".tnc":
        return read_tnc(p)[0]
    return load_tensor(p)


def _dir_tensors(d: str) -> list[Path]:
    p = Path(d)
    if not p.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    files = sorted(f for f in p.iterdir() if f.suffix.lower() in (".dt", ".tnc", ".csv") + IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no tensors in {d}")
    return files


def cmd_metrics(args, config) -> int:
    kind = args.kind
    ops = list(args.operands)
    bins = args.bins
    if kind == "l2":
        if not (args.originals and args.recons):
            raise UsageError("metrics l2 needs --originals DIR and --recons DIR")
        fo, fr = _dir_tensors(args.originals), _dir_tensors(args.recons)
        if [f.name for f in fo] != [f.name for f in fr]:
            raise UsageError("--originals and --recons must hold identically named files")
        val = metrics.l2_dissimilarity([_load_operand(str(f)) for f in fo], [_load_operand(str(f)) for f in fr])
        rep = metrics.MetricReport("l2_dissimilarity", [val], {"pairs": len(fo)},
                                   [args.originals, args.recons])
    elif kind == "nmi":
        _need(ops, 2, kind)
        b = bins if bins is not None else _resolve(args, config, "bins", int)
        val = metrics.nmi(_load_operand(ops[0]), _load_operand(ops[1]), b)
        rep = metrics.MetricReport("nmi", [val], {"bins": b}, ops)
    elif kind == "pearson":
        _need(ops, 2, kind)
        axis = args.axis if args.axis is not None else 3
        a, b = _load_operand(ops[0]), _load_operand(ops[1])
        if not 1 <= axis <= a.ndim:
            raise UsageError(f"--axis must be between 1 and {a.ndim}, got {axis}")
        vals = metrics.pearson_per_rank(a, b, axis - 1)
        rep = metrics.MetricReport("pearson_abs", [float(v) for v in vals], {"axis": axis}, ops)
    elif kind == "histogram":
        _need(ops, 1, kind)
        b = bins if bins is not None else 10
        counts, edges = metrics.histogram(_load_operand(ops[0]), b)
        rep = metrics.MetricReport("histogram", [float(c) for c in counts],
                                   {"bins": b, "edges": [float(e) for e in edges]}, ops)
    elif kind == "cr":
        _need(ops, 1, kind)
        manifest = ShareManifest.load(ops[0])
        params = sum(int(np.prod(f.shape)) for f in manifest.fragments)
        total = int(np.prod(manifest.structure["mode_sizes"]))
        rep = metrics.MetricReport("compression_ratio", [params / total],
                                   {"params": params, "entries": total}, ops)
    elif kind == "profile":
        _need(ops, 1, kind)
        axis = args.axis if args.axis is not None else 2
        core = _load_operand(ops[0])
        if not 1 <= axis <= core.ndim:
            raise UsageError(f"--axis must be between 1 and {core.ndim}, got {axis}")
        prof = metrics.core_norm_profile(core, axis - 1)
        rep = metrics.MetricReport("norm_factor", [float(v) for v in prof.factors],
                                   {"axis": axis, "zero_slices": prof.zero_slices}, ops)
    else:  # argparse restricts the choices
        raise UsageError(f"unknown metric {kind!r}")

    if args.out:
        rep.write(args.out, args.name)
    sys.stdout.write(rep.to_json() if args.json else rep.to_csv())
    return 0


def _need(ops: Sequence[str], n: int, kind: str) -> None:
    if len(ops) != n:
        raise UsageError(f"metrics {kind} takes {n} operand(s), got {len(ops)}")


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args, config) -> int:
    seed = _seed(args, config)
    seed = 0 if seed is None else seed
    kwargs = {}
    if args.suite == "timing":
        kwargs["repeats"] = _resolve(args, config, "repeats", int)
    res = bench.run_suite(args.suite, seed, **kwargs)
    out = args.out or _resolve(args, config, "out")
    paths = res.write(out)
    main_table = {"superdiagonal": "summary", "timing": "table", "distortion-curve": "curve"}[args.suite]
    sys.stdout.write(res.table_csv(main_table))
    for p in paths:
        log.info("wrote %s", p)
    if args.suite == "timing":
        bad = [r["algorithm"] for r in res.tables["table"] if not (r["ratio_ok"] and r["time_ok"])]
        if bad:
            print(f"timing check failed for: {', '.join(bad)}", file=sys.stderr)
            return EXIT_BENCH_FAILED
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnvault", description="Tensor-network secret sharing toolkit.")
    p.add_argument("--config", help="key = value file overriding the defaults")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="decompose a tensor into randomized shares")
    d.add_argument("input", help=".dt, .csv, .pgm or .ppm file")
    d.add_argument("--format", choices=("tt", "tr", "tucker", "ht"))
    d.add_argument("--eps", type=float)
    d.add_argument("--ranks", help="comma-separated ranks (caps for tt/tr)")
    d.add_argument("--delta", type=float)
    d.add_argument("--seed", type=int)
    d.add_argument("--no-randomize", action="store_true", help="classical (baseline) algorithm")
    d.add_argument("--servers", type=int, help="number of servers (default: one per block)")
    d.add_argument("--assignment", choices=("round_robin", "random"))
    d.add_argument("--permute-modes", action="store_true", help="secretly permute the index of every mode")
    d.add_argument("--pad", help="noise padding per mode (one value or comma list)")
    d.add_argument("--pad-amplitude", type=float, default=1.0)
    bal = d.add_mutually_exclusive_group()
    bal.add_argument("--balance", dest="balance", action="store_true", default=None,
                     help="reorder axes to a balanced shape (default for images)")
    bal.add_argument("--no-balance", dest="balance", action="store_false")
    d.add_argument("-o", "--out")
    d.set_defaults(func=cmd_decompose)

    r = sub.add_parser("reconstruct", help="rebuild the tensor from manifest + fragments")
    r.add_argument("manifest")
    r.add_argument("--fragments", help="fragment directory (default: <manifest dir>/fragments)")
    r.add_argument("-o", "--output", help="output .dt path")
    r.add_argument("--verify", help="original tensor; prints the relative error")
    r.add_argument("--keep-axis-perm", action="store_true")
    r.add_argument("--keep-padding", action="store_true")
    r.set_defaults(func=cmd_reconstruct)

    m = sub.add_parser("metrics", help="fidelity and leakage metrics")
    m.add_argument("kind", choices=("l2", "nmi", "pearson", "histogram", "cr", "profile"))
    m.add_argument("operands", nargs="*")
    m.add_argument("--bins", type=int)
    m.add_argument("--axis", type=int, help="1-based axis (pearson: rank axis, profile: slice axis)")
    m.add_argument("--originals")
    m.add_argument("--recons")
    m.add_argument("--json", action="store_true", help="print JSON instead of CSV")
    m.add_argument("-o", "--out", help="directory for <name>.csv and <name>.json")
    m.add_argument("--name", help="file stem for --out (default: metric name)")
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("bench", help="benchmark suites")
    b.add_argument("suite", choices=bench.SUITES)
    b.add_argument("--seed", type=int)
    b.add_argument("--repeats", type=int)
    b.add_argument("-o", "--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = read_config(args.config) if args.config else {}
        return args.func(args, config)
    except UsageError as exc:
        print(f"tnvault {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TNVaultError as exc:
        print(f"tnvault {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"tnvault {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
