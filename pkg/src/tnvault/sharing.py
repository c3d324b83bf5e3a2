"""Secret shares from tensor-network decompositions.

Each core or factor of a randomized decomposition becomes one fragment,
stored as ``.dt`` bytes under an anonymous 128-bit identifier and assigned to
a server.  The manifest records where every fragment lives, its SHA-256
digest and the structure needed to put the network back together.
"""
from __future__ import annotations

import hashlib
import json
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .decomp import rht, rtd, tr_svd, tt_svd
from .errors import (
    FormatError,
    HashMismatch,
    MissingFragment,
    SeedCountMismatch,
    ShapeMismatch,
    TooFewServers,
    TooManyServers,
)
from .formats import (
    HTRepresentation,
    TRRepresentation,
    TTRepresentation,
    TuckerRepresentation,
    format_tag,
    reconstruct,
    rep_blocks,
    rep_from_blocks,
    rep_structure,
)
from .io import decode_dt, encode_dt
from .ops import tt_add
from .tensor import as_tensor, inverse_permutation, permute_axes

__all__ = [
    "FragmentEntry",
    "ShareManifest",
    "ShareSet",
    "content_hash",
    "assign_servers",
    "shares_from_rep",
    "generate_shares",
    "mode_permutations",
    "permute_modes",
    "rep_from_shares",
    "reconstruct_from_shares",
    "additive_to_tn",
    "tt_sum",
    "tn_to_additive",
]

MANIFEST_VERSION = 1
HASH_ALGORITHM = "sha256"
SCHEMES = ("tt", "tr", "tucker", "ht")


def content_hash(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class FragmentEntry:
    fragment_id: str
    server_id: int
    content_hash: str
    core_index: int
    role: str
    shape: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "fragment_id": self.fragment_id,
            "server_id": self.server_id,
            "content_hash": self.content_hash,
            "core_index": self.core_index,
            "role": self.role,
            "shape": list(self.shape),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FragmentEntry":
        return cls(
            str(d["fragment_id"]),
            int(d["server_id"]),
            str(d["content_hash"]),
            int(d["core_index"]),
            str(d["role"]),
            tuple(int(s) for s in d["shape"]),
        )


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.integer):
        return int(x)
    return x


def _tree_from_json(x):
    if isinstance(x, list):
        return tuple(_tree_from_json(v) for v in x)
    return int(x)


@dataclass
class ShareManifest:
    scheme: str
    fragments: list[FragmentEntry]
    structure: dict[str, Any]
    permutation_seeds: list[int | None] | None = None
    created_at: str = ""
    version: int = MANIFEST_VERSION
    hash_algorithm: str = HASH_ALGORITHM

    def __post_init__(self):
        ids = [f.fragment_id for f in self.fragments]
        if len(set(ids)) != len(ids):
            raise FormatError("fragment ids in a manifest must be unique")
        keys = [(f.role, f.core_index) for f in self.fragments]
        if len(set(keys)) != len(keys):
            raise FormatError("a manifest lists one fragment per core/factor")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "hash_algorithm": self.hash_algorithm,
            "scheme": self.scheme,
            "fragments": [f.to_dict() for f in self.fragments],
            "permutation_seeds": self.permutation_seeds,
            "structure": _jsonable(self.structure),
            "created_at": self.created_at,
        }

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, no insignificant whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ShareManifest":
        try:
            if d.get("hash_algorithm", HASH_ALGORITHM) != HASH_ALGORITHM:
                raise FormatError(f"unsupported hash algorithm {d['hash_algorithm']!r}")
            if int(d.get("version", MANIFEST_VERSION)) != MANIFEST_VERSION:
                raise FormatError(f"unsupported manifest version {d['version']}")
            structure = dict(d["structure"])
            if structure.get("tree") is not None:
                structure["tree"] = _tree_from_json(structure["tree"])
            return cls(
                scheme=str(d["scheme"]),
                fragments=[FragmentEntry.from_dict(f) for f in d["fragments"]],
                structure=structure,
                permutation_seeds=d.get("permutation_seeds"),
                created_at=str(d.get("created_at", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed manifest: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ShareManifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path: str | Path) -> Path:
        p = Path(path)
        p.write_text(self.to_json() + "\n")
        return p

    @classmethod
    def load(cls, path: str | Path) -> "ShareManifest":
        return cls.from_json(Path(path).read_text())

    def fragment(self, fragment_id: str) -> FragmentEntry:
        for f in self.fragments:
            if f.fragment_id == fragment_id:
                return f
        raise MissingFragment(fragment_id, "not listed in the manifest")

    def server_ids(self) -> list[int]:
        return sorted({f.server_id for f in self.fragments})

    def fragments_of(self, server_id: int) -> list[FragmentEntry]:
        return [f for f in self.fragments if f.server_id == server_id]


@dataclass
class ShareSet:
    fragments: dict[str, bytes] = field(default_factory=dict)

    def __contains__(self, fragment_id: str) -> bool:
        return fragment_id in self.fragments

    def __len__(self) -> int:
        return len(self.fragments)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for fid, blob in self.fragments.items():
            (d / f"{fid}.dt").write_bytes(blob)

    @classmethod
    def load(cls, directory: str | Path, manifest: ShareManifest | None = None) -> "ShareSet":
        """Read fragments named ``<fragment_id>.dt``; absent files are skipped."""
        d = Path(directory)
        if manifest is not None:
            ids = [f.fragment_id for f in manifest.fragments]
        else:
            ids = [p.stem for p in sorted(d.glob("*.dt"))]
        out = {}
        for fid in ids:
            p = d / f"{fid}.dt"
            if p.exists():
                out[fid] = p.read_bytes()
        return cls(out)


def assign_servers(n_blocks: int, n_servers: int, mode: str = "round_robin", seed=None) -> list[int]:
    """Server of every block; consecutive blocks never share a server."""
    if n_servers < 2:
        raise TooFewServers(f"need at least 2 servers, got {n_servers}")
    if n_servers > n_blocks:
        raise TooManyServers(f"{n_servers} servers for only {n_blocks} cores/factors")
    if mode == "round_robin":
        return [k % n_servers for k in range(n_blocks)]
    if mode == "random":
        sigma = np.random.default_rng(seed).permutation(n_servers)
        return [int(sigma[k % n_servers]) for k in range(n_blocks)]
    raise ValueError(f"unknown assignment mode {mode!r}")


def mode_permutations(mode_sizes: Sequence[int], seeds: Sequence[int | None]) -> list[np.ndarray]:
    if len(seeds) != len(mode_sizes):
        raise SeedCountMismatch(f"{len(seeds)} permutation seeds for {len(mode_sizes)} modes")
    return [
        np.arange(i) if s is None else np.random.default_rng(int(s)).permutation(int(i))
        for i, s in zip(mode_sizes, seeds)
    ]


def permute_modes(rep, seeds: Sequence[int | None], inverse: bool = False):
    """Shuffle the index of every mode inside the block that carries it.

    With permutation ``p_k`` drawn from ``seeds[k]`` (``None`` = identity),
    the result reconstructs to ``T'[j_1..j_N] = T[p_1[j_1], ..., p_N[j_N]]``.
    ``inverse=True`` undoes it.
    """
    perms = mode_permutations(rep.mode_sizes, seeds)
    if inverse:
        perms = [np.argsort(p) for p in perms]
    if isinstance(rep, TTRepresentation):
        return type(rep)([c[:, p, :] for c, p in zip(rep.cores, perms)])
    if isinstance(rep, TuckerRepresentation):
        return TuckerRepresentation(rep.core.copy(), [u[p, :] for u, p in zip(rep.factors, perms)])
    if isinstance(rep, HTRepresentation):
        return HTRepresentation(
            rep.tree, [b.copy() for b in rep.transfer], [u[p, :] for u, p in zip(rep.factors, perms)]
        )
    raise TypeError(f"cannot permute {type(rep).__name__}")


def shares_from_rep(
    rep,
    n_servers: int,
    permutation_seeds: Sequence[int | None] | None = None,
    assignment: str = "round_robin",
    assignment_seed=None,
    extra_structure: dict | None = None,
) -> tuple[ShareSet, ShareManifest]:
    """Package an existing representation as fragments plus manifest."""
    if permutation_seeds is not None:
        permutation_seeds = [None if s is None else int(s) for s in permutation_seeds]
        rep = permute_modes(rep, permutation_seeds)
    blocks = rep_blocks(rep)
    servers = assign_servers(len(blocks), n_servers, assignment, assignment_seed)
    shares = ShareSet()
    entries = []
    for (role, idx, arr), sid in zip(blocks, servers):
        blob = encode_dt(arr)
        fid = secrets.token_hex(16)
        shares.fragments[fid] = blob
        entries.append(FragmentEntry(fid, sid, content_hash(blob), idx, role, tuple(arr.shape)))
    structure = rep_structure(rep)
    if extra_structure:
        structure.update(extra_structure)
    manifest = ShareManifest(
        scheme=format_tag(rep),
        fragments=entries,
        structure=structure,
        permutation_seeds=permutation_seeds,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    return shares, manifest


def generate_shares(
    a: np.ndarray,
    scheme: str = "tt",
    eps: float | None = None,
    ranks=None,
    delta: float = 0.05,
    n_servers: int = 2,
    permute: bool = False,
    seed: int | None = None,
    tree=None,
    assignment: str = "round_robin",
):
    """Decompose ``a`` with a randomized algorithm and cut it into shares.

    TT/TR take ``eps``; Tucker takes ``ranks`` or ``eps``; HT takes
    ``ranks`` (int or node map) and/or ``eps``.  Returns
    ``(shares, manifest, report)``.
    """
    a = as_tensor(a)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if n_servers < 2:
        raise TooFewServers(f"need at least 2 servers, got {n_servers}")
    n_blocks = a.ndim if scheme in ("tt", "tr") else a.ndim + (1 if scheme == "tucker" else a.ndim - 1)
    if n_servers > n_blocks:
        raise TooManyServers(f"{n_servers} servers for only {n_blocks} cores/factors")
    if scheme == "tt":
        rep, report = tt_svd(a, eps, True, delta, seed, max_ranks=ranks)
    elif scheme == "tr":
        rep, report = tr_svd(a, eps, True, delta, seed, max_ranks=ranks)
    elif scheme == "tucker":
        rep, report = rtd(a, ranks, True, delta, seed, eps=eps)
    else:
        rep, report = rht(a, tree, ranks, True, delta, seed, eps=eps)
    pseeds = None
    if permute:
        ss = np.random.SeedSequence([report.seed, 0x9E3779B9])
        pseeds = [int(s) for s in ss.generate_state(a.ndim, np.uint32)]
    shares, manifest = shares_from_rep(
        rep, n_servers, pseeds, assignment, assignment_seed=report.seed
    )
    return shares, manifest, report


def rep_from_shares(manifest: ShareManifest, shares: ShareSet):
    """Verify every fragment and rebuild the (un-permuted) representation."""
    blocks = {}
    for f in manifest.fragments:
        if f.fragment_id not in shares.fragments:
            raise MissingFragment(f.fragment_id, f"{f.role} {f.core_index} on server {f.server_id}")
    for f in manifest.fragments:
        blob = shares.fragments[f.fragment_id]
        if content_hash(blob) != f.content_hash:
            raise HashMismatch(f.fragment_id, f"{f.role} {f.core_index}")
        arr = decode_dt(blob)
        if arr.shape != f.shape:
            raise ShapeMismatch(f"fragment {f.fragment_id} has shape {arr.shape}, manifest says {f.shape}")
        blocks[(f.role, f.core_index)] = arr
    rep = rep_from_blocks(manifest.scheme, blocks, manifest.structure.get("tree"))
    if manifest.permutation_seeds is not None:
        rep = permute_modes(rep, manifest.permutation_seeds, inverse=True)
    return rep


def reconstruct_from_shares(
    manifest: ShareManifest, shares: ShareSet, undo_axis_perm: bool = True
) -> np.ndarray:
    """Dense secret from a complete, intact share set.

    If the manifest records an ``axis_perm`` (axes were reordered before
    decomposing), it is undone unless ``undo_axis_perm`` is false.
    """
    t = reconstruct(rep_from_shares(manifest, shares))
    perm = manifest.structure.get("axis_perm")
    if undo_axis_perm and perm is not None:
        t = permute_axes(t, inverse_permutation(perm))
    return t


def tt_sum(reps: Iterable[TTRepresentation]) -> TTRepresentation:
    reps = list(reps)
    if not reps:
        raise ValueError("nothing to sum")
    out = reps[0]
    for r in reps[1:]:
        out = tt_add(out, r)
    return out


def additive_to_tn(
    shares: Sequence[np.ndarray],
    eps: float,
    delta: float = 0.05,
    seeds: Sequence[int | None] | None = None,
) -> list[TTRepresentation]:
    """Each party turns its additive share into a randomized TT.

    The folded ``tt_add`` of the outputs represents the secret up to
    ``eps`` times the sum of the share norms.
    """
    shares = [as_tensor(s) for s in shares]
    if not shares:
        raise ValueError("no shares given")
    if any(s.shape != shares[0].shape for s in shares):
        raise ShapeMismatch("additive shares must all have the same shape")
    if seeds is None:
        seeds = [None] * len(shares)
    if len(seeds) != len(shares):
        raise SeedCountMismatch(f"{len(seeds)} seeds for {len(shares)} shares")
    return [tt_svd(s, eps, True, delta, sd)[0] for s, sd in zip(shares, seeds)]


def tn_to_additive(rep, n_parties: int, seed: int | None = None, scale: float = 1.0) -> list[np.ndarray]:
    """Additive shares of the tensor held in a representation.

    The first ``n_parties - 1`` shares are uniform on ``[-scale, scale]``,
    drawn without looking at the secret; the last is the secret minus their sum.
    """
    if n_parties < 2:
        raise TooFewServers(f"additive sharing needs at least 2 parties, got {n_parties}")
    secret = reconstruct(rep)
    rng = np.random.default_rng(seed)
    out = [rng.uniform(-scale, scale, size=secret.shape) for _ in range(n_parties - 1)]
    out.append(secret - np.sum(out, axis=0))
    return out
