"""Simulated non-colluding servers and the coordinator that drives them.

Each server runs in its own thread and talks only through byte-stream links:
one to the coordinator and one to each ring neighbour (server ``i`` is linked
to ``i - 1`` and ``i + 1``).  The coordinator issues one request at a time and
waits for the answer, so the message order, and hence the protocol log, is
deterministic on every transport.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import queue
import secrets
import threading
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from ..errors import (
    HashMismatch,
    InvalidThreshold,
    MisalignedShares,
    MissingFragment,
    NodeFailure,
    ProtocolViolation,
    TNVaultError,
    TooFewServers,
    UnknownServer,
)
from ..io import encode_dt
from ..linalg import resolve_seed
from ..ops import add_cores, hadamard_cores, round_absorb, round_compress_step, round_orth_step
from ..sharing import FragmentEntry, ShareManifest, ShareSet, content_hash
from ..tensor import direct_sum, kronecker, partial_direct_sum, partial_kronecker
from .transport import Endpoint, LinkClosed, LinkFactory, read_config
from .wire import MsgType, WireMessage, describe, read_message

log = logging.getLogger(__name__)

COORDINATOR = "coordinator"


class ProtocolLog:
    """Every message sent, in order, as JSON-serializable dicts."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self.entries: list[dict[str, Any]] = []
        self._fh = open(path, "w") if path is not None else None

    def record(self, src, dst, msg: WireMessage, op: str | None) -> None:
        info = describe(msg)
        with self._lock:
            entry = {
                "seq": len(self.entries),
                "ts": time.time(),
                "src": src,
                "dst": dst,
                "msg_type": msg.msg_type.name,
                "payload_len": len(msg.payload),
                "payload_sha256": hashlib.sha256(msg.payload).hexdigest(),
                "op": info.get("op") or op,
                "shape": info.get("shape"),
            }
            self.entries.append(entry)
            if self._fh is not None:
                self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
                self._fh.flush()

    def without_timestamps(self) -> list[dict[str, Any]]:
        return [{k: v for k, v in e.items() if k != "ts"} for e in self.entries]

    def observed_by(self, server_id: int) -> list[dict[str, Any]]:
        return [e for e in self.entries if e["dst"] == server_id]

    def since(self, seq: int) -> list[dict[str, Any]]:
        return self.entries[seq:]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class _Hooks:
    tamper: Callable[[Any, Any, MsgType, bytes], bytes] | None = None


class Channel:
    """Message-level view of one endpoint, logging every send."""

    def __init__(self, ep: Endpoint, src, dst, plog: ProtocolLog, hooks: _Hooks):
        self.ep = ep
        self.src = src
        self.dst = dst
        self._log = plog
        self._hooks = hooks

    def send(self, msg: WireMessage, op: str | None = None) -> None:
        if self._hooks.tamper is not None:
            msg = WireMessage(msg.msg_type, self._hooks.tamper(self.src, self.dst, msg.msg_type, msg.payload))
        self._log.record(self.src, self.dst, msg, op)
        self.ep.send(msg.encode())

    def recv(self) -> WireMessage:
        return read_message(self.ep.recv_exact)

    def close(self) -> None:
        self.ep.close()


class ServerNode(threading.Thread):
    """One storage server.  Holds fragments, answers coordinator requests."""

    def __init__(self, server_id: int, coord: Channel, inbox_timeout: float):
        super().__init__(name=f"tnvault-server-{server_id}", daemon=True)
        self.server_id = server_id
        self.coord = coord
        self.left: Channel | None = None
        self.right: Channel | None = None
        self.fragments: dict[str, np.ndarray] = {}
        self._work: dict[str, np.ndarray] = {}
        self._inbox = {"left": queue.Queue(), "right": queue.Queue()}
        self._readers: list[threading.Thread] = []
        self._inbox_timeout = inbox_timeout
        self.failed: BaseException | None = None

    # -- neighbour links ---------------------------------------------------
    def attach(self, side: str, ch: Channel) -> None:
        setattr(self, side, ch)
        t = threading.Thread(
            target=self._drain, args=(ch, self._inbox[side]),
            name=f"tnvault-server-{self.server_id}-{side}", daemon=True,
        )
        self._readers.append(t)

    @staticmethod
    def _drain(ch: Channel, q: queue.Queue) -> None:
        # keeps neighbour sends from blocking on full socket buffers
        while True:
            try:
                q.put(ch.recv())
            except (LinkClosed, NodeFailure, ProtocolViolation, OSError):
                q.put(None)
                return

    def _pop(self, side: str) -> np.ndarray:
        try:
            msg = self._inbox[side].get(timeout=self._inbox_timeout)
        except queue.Empty:
            raise ProtocolViolation(
                f"server {self.server_id} expected a tensor from its {side} neighbour"
            ) from None
        if msg is None:
            raise NodeFailure(f"{side} neighbour of server {self.server_id} went away")
        return msg.array()

    def _core(self, body: dict) -> np.ndarray:
        session = body.get("session")
        if session is not None and session in self._work:
            return self._work[session]
        fid = body["source"]
        if fid not in self.fragments:
            raise MissingFragment(fid, f"not held by server {self.server_id}")
        return self.fragments[fid]

    def _store_result(self, fid: str, arr: np.ndarray) -> dict:
        self.fragments[fid] = arr
        return {"fragment_id": fid, "content_hash": content_hash(encode_dt(arr)), "shape": list(arr.shape)}

    # -- main loop ---------------------------------------------------------
    def run(self) -> None:
        for t in self._readers:
            t.start()
        while True:
            try:
                msg = self.coord.recv()
            except (LinkClosed, NodeFailure, OSError):
                return
            except ProtocolViolation as exc:
                self._reply_error(exc, None)
                continue
            if msg.msg_type != MsgType.OP_REQUEST:
                self._reply_error(ProtocolViolation(f"unexpected {msg.msg_type.name} from coordinator"), None)
                continue
            body = msg.json()
            op = body.get("op")
            handler = getattr(self, f"_op_{op}", None)
            try:
                if handler is None:
                    raise ProtocolViolation(f"unknown op {op!r}")
                reply = handler(body)
                self.coord.send(WireMessage.done(dict(reply, op=op)), op)
            except (LinkClosed, OSError) as exc:
                self.failed = exc
                return
            except Exception as exc:  # reported back, node keeps serving
                self._reply_error(exc, op)
            if op == "shutdown":
                return

    def _reply_error(self, exc: BaseException, op) -> None:
        body = {
            "op": op,
            "error": type(exc).__name__,
            "message": str(exc),
            "fragment_id": getattr(exc, "fragment_id", None),
            "server_id": self.server_id,
        }
        try:
            self.coord.send(WireMessage.error(body), op)
        except (LinkClosed, OSError):
            pass

    # -- operations --------------------------------------------------------
    def _op_ping(self, body: dict) -> dict:
        return {"server_id": self.server_id, "fragments": sorted(self.fragments)}

    def _op_shutdown(self, body: dict) -> dict:
        return {"server_id": self.server_id}

    def _op_store(self, body: dict) -> dict:
        blob = self.coord.recv()
        if blob.msg_type != MsgType.TENSOR_BLOB:
            raise ProtocolViolation("store must be followed by a TensorBlob")
        fid = body["fragment_id"]
        if content_hash(blob.payload) != body["content_hash"]:
            raise HashMismatch(fid, f"received by server {self.server_id}")
        arr = blob.array()
        if list(arr.shape) != list(body["shape"]):
            raise ProtocolViolation(f"fragment {fid} has shape {arr.shape}, expected {body['shape']}")
        self.fragments[fid] = arr
        return {"fragment_id": fid}

    def _op_fetch(self, body: dict) -> dict:
        fid = body["fragment_id"]
        if fid not in self.fragments:
            raise MissingFragment(fid, f"not held by server {self.server_id}")
        self.coord.send(WireMessage.tensor(self.fragments[fid]), "fetch")
        return {"fragment_id": fid}

    def _op_drop(self, body: dict) -> dict:
        for fid in body["fragment_ids"]:
            self.fragments.pop(fid, None)
        return {}

    def _op_local_op(self, body: dict) -> dict:
        kind = body["kind"]
        outputs = []
        for item in body["items"]:
            a = self._core({"source": item["a"]})
            b = self._core({"source": item["b"]})
            outputs.append(self._store_result(item["out"], _combine_blocks(kind, item, a, b)))
        return {"outputs": outputs}

    def _op_round_orth(self, body: dict) -> dict:
        q, l = round_orth_step(self._core(body))
        self._work[body["session"]] = q
        self.left.send(WireMessage.tensor(l), "round_orth")
        return {"sent": list(l.shape)}

    def _op_round_absorb(self, body: dict) -> dict:
        l = self._pop("right")
        self._work[body["session"]] = round_absorb(self._core(body), l)
        return {}

    def _op_round_compress(self, body: dict) -> dict:
        carry = frame = None
        if body["expect_carry"]:
            carry = self._pop("left")
            if body["expect_frame"]:
                frame = [self._pop("left")]
        core, carry_out, frame_out, rec, err2 = round_compress_step(
            self._core(body), carry, frame, body["rel_tol"], body["randomize"],
            body["delta"], body["seed"], body["step"], body["last"],
        )
        if not body["last"]:
            self.right.send(WireMessage.tensor(carry_out), "round_compress")
            if frame_out is not None:
                if len(frame_out) != 1:
                    raise ProtocolViolation("TT rounding frames have a single block")
                self.right.send(WireMessage.tensor(frame_out[0]), "round_compress")
        self._work.pop(body["session"], None)
        out = self._store_result(body["out"], core)
        out.update(
            has_frame=frame_out is not None,
            err2=err2,
            record=None if rec is None else [float(v) for v in rec.values],
        )
        return out


def _combine_blocks(kind: str, item: dict, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kind == "tt_add":
        return add_cores(a, b, item["position"])
    if kind == "tt_hadamard":
        return hadamard_cores(a, b)
    if kind == "tucker_binary":
        sub, role = item["tucker_kind"], item["role"]
        if role == "core":
            return direct_sum(a, b) if sub in ("add", "direct_sum") else kronecker(a, b)
        return {
            "add": partial_direct_sum,
            "direct_sum": direct_sum,
            "hadamard": partial_kronecker,
            "kronecker": kronecker,
        }[sub](a, b)
    raise ProtocolViolation(f"unknown local op {kind!r}")


def _structure_from_entries(scheme: str, entries: list[FragmentEntry], base: dict) -> dict:
    out = {k: v for k, v in base.items() if k not in ("ranks", "mode_sizes", "node_ranks")}
    if scheme in ("tt", "tr"):
        cores = sorted((e for e in entries if e.role == "core"), key=lambda e: e.core_index)
        out["ranks"] = [cores[0].shape[0]] + [e.shape[2] for e in cores]
        out["mode_sizes"] = [e.shape[1] for e in cores]
    elif scheme == "tucker":
        facs = sorted((e for e in entries if e.role == "factor"), key=lambda e: e.core_index)
        core = next(e for e in entries if e.role == "core")
        out["ranks"] = list(core.shape)
        out["mode_sizes"] = [e.shape[0] for e in facs]
    out["format"] = scheme
    return out


class ClusterHandle:
    """Coordinator side of a running cluster."""

    def __init__(self, n: int, transport: str, config: Mapping[str, str] | None,
                 log_path=None, timeout: float = 120.0, inbox_timeout: float = 30.0):
        self.n = n
        self.transport = transport
        self.log = ProtocolLog(log_path)
        self.hooks = _Hooks()
        self.placement: dict[str, int] = {}
        self.last_records: list[list[float]] = []
        self._closed = False
        factory = LinkFactory(transport, config)
        self._endpoints: list[Endpoint] = []
        self._coord: list[Channel] = []
        self.nodes: list[ServerNode] = []
        try:
            for i in range(n):
                c_ep, n_ep = factory()
                self._endpoints += [c_ep, n_ep]
                for ep in (c_ep, n_ep):
                    ep.timeout = timeout
                self._coord.append(Channel(c_ep, COORDINATOR, i, self.log, self.hooks))
                self.nodes.append(ServerNode(i, Channel(n_ep, i, COORDINATOR, self.log, self.hooks), inbox_timeout))
            for i in range(n - 1):
                a_ep, b_ep = factory()
                self._endpoints += [a_ep, b_ep]
                for ep in (a_ep, b_ep):
                    ep.timeout = None
                self.nodes[i].attach("right", Channel(a_ep, i, i + 1, self.log, self.hooks))
                self.nodes[i + 1].attach("left", Channel(b_ep, i + 1, i, self.log, self.hooks))
        except BaseException:
            for ep in self._endpoints:
                ep.close()
            self.log.close()
            raise
        for node in self.nodes:
            node.start()

    # -- plumbing ------------------------------------------------------------
    def __enter__(self) -> "ClusterHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    @property
    def tamper(self):
        return self.hooks.tamper

    @tamper.setter
    def tamper(self, fn) -> None:
        self.hooks.tamper = fn

    def _check_server(self, sid: int) -> None:
        if not 0 <= sid < self.n:
            raise UnknownServer(f"server {sid} is not part of this {self.n}-server cluster")

    def _recv(self, sid: int) -> WireMessage:
        try:
            return self._coord[sid].recv()
        except (LinkClosed, OSError) as exc:
            raise NodeFailure(f"server {sid} is unreachable: {exc}") from exc

    def _raise_remote(self, sid: int, body: dict) -> None:
        name, msg, fid = body.get("error"), body.get("message", ""), body.get("fragment_id")
        if name == "HashMismatch":
            raise HashMismatch(fid or "?", f"reported by server {sid}")
        if name == "MissingFragment":
            raise MissingFragment(fid or "?", f"reported by server {sid}")
        if name == "ProtocolViolation":
            raise ProtocolViolation(f"server {sid}: {msg}")
        raise NodeFailure(f"server {sid} failed on {body.get('op')!r}: {name}: {msg}")

    def _request(self, sid: int, body: dict, blobs: tuple[bytes, ...] = ()) -> dict:
        if self._closed:
            raise NodeFailure("cluster has been shut down")
        self._check_server(sid)
        ch = self._coord[sid]
        op = body["op"]
        try:
            ch.send(WireMessage.request(body), op)
            for blob in blobs:
                ch.send(WireMessage(MsgType.TENSOR_BLOB, blob), op)
        except (LinkClosed, OSError) as exc:
            raise NodeFailure(f"server {sid} is unreachable: {exc}") from exc
        reply = self._recv(sid)
        if reply.msg_type == MsgType.ERROR:
            self._raise_remote(sid, reply.json())
        if reply.msg_type != MsgType.OP_DONE:
            raise ProtocolViolation(f"server {sid} answered {op!r} with {reply.msg_type.name}")
        return reply.json()

    def ping(self) -> list[dict]:
        return [self._request(i, {"op": "ping"}) for i in range(self.n)]

    def alive(self) -> list[bool]:
        return [node.is_alive() for node in self.nodes]

    # -- storage -------------------------------------------------------------
    def distribute(self, shares: ShareSet, manifest: ShareManifest) -> dict[int, list[str]]:
        """Send every fragment to its server; servers re-verify the hashes."""
        for f in manifest.fragments:
            self._check_server(f.server_id)
            if f.fragment_id not in shares.fragments:
                raise MissingFragment(f.fragment_id, "absent from the share set")
        ack: dict[int, list[str]] = {i: [] for i in range(self.n)}
        for f in manifest.fragments:
            body = {
                "op": "store",
                "fragment_id": f.fragment_id,
                "content_hash": f.content_hash,
                "role": f.role,
                "core_index": f.core_index,
                "shape": list(f.shape),
            }
            self._request(f.server_id, body, (shares.fragments[f.fragment_id],))
            self.placement[f.fragment_id] = f.server_id
            ack[f.server_id].append(f.fragment_id)
        return ack

    def fetch(self, manifest: ShareManifest) -> ShareSet:
        out = ShareSet()
        for f in manifest.fragments:
            self._check_server(f.server_id)
            ch = self._coord[f.server_id]
            ch.send(WireMessage.request({"op": "fetch", "fragment_id": f.fragment_id}), "fetch")
            blob = self._recv(f.server_id)
            if blob.msg_type == MsgType.ERROR:
                self._raise_remote(f.server_id, blob.json())
            done = self._recv(f.server_id)
            if blob.msg_type != MsgType.TENSOR_BLOB or done.msg_type != MsgType.OP_DONE:
                raise ProtocolViolation(f"bad fetch reply from server {f.server_id}")
            out.fragments[f.fragment_id] = blob.payload
        return out

    def _held(self, manifest: ShareManifest) -> None:
        for f in manifest.fragments:
            if self.placement.get(f.fragment_id) != f.server_id:
                raise MissingFragment(f.fragment_id, f"not distributed to server {f.server_id}")

    def _new_manifest(self, old: ShareManifest, entries: list[FragmentEntry], scheme=None) -> ShareManifest:
        scheme = scheme or old.scheme
        m = ShareManifest(
            scheme=scheme,
            fragments=entries,
            structure=_structure_from_entries(scheme, entries, old.structure),
            permutation_seeds=old.permutation_seeds,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        for e in entries:
            self.placement[e.fragment_id] = e.server_id
        return m

    # -- dispersed computation ----------------------------------------------
    def local_op(self, kind: str, a: ShareManifest, b: ShareManifest, tucker_kind: str | None = None) -> ShareManifest:
        """Core-wise binary op; no tensor data leaves any server."""
        if kind in ("tt_add", "tt_hadamard"):
            if a.scheme != "tt" or b.scheme != "tt":
                raise MisalignedShares(f"{kind} needs TT shares, got {a.scheme}/{b.scheme}")
        elif kind == "tucker_binary":
            if a.scheme != "tucker" or b.scheme != "tucker":
                raise MisalignedShares(f"tucker_binary needs Tucker shares, got {a.scheme}/{b.scheme}")
            if tucker_kind not in ("add", "direct_sum", "hadamard", "kronecker"):
                raise ValueError(f"unknown Tucker operation {tucker_kind!r}")
        else:
            raise ValueError(f"unknown dispersed operation {kind!r}")
        if a.permutation_seeds != b.permutation_seeds or (
            kind == "tucker_binary" and tucker_kind in ("direct_sum", "kronecker")
            and a.permutation_seeds is not None
        ):
            raise MisalignedShares("operands use different mode permutations")
        ka = {(f.role, f.core_index): f for f in a.fragments}
        kb = {(f.role, f.core_index): f for f in b.fragments}
        if set(ka) != set(kb):
            raise MisalignedShares("operands have different block structures")
        for key in ka:
            if ka[key].server_id != kb[key].server_id:
                raise MisalignedShares(f"{key[0]} {key[1]} lives on servers {ka[key].server_id} and {kb[key].server_id}")
        self._held(a)
        self._held(b)
        n_cores = len(ka)
        per_server: dict[int, list[dict]] = {}
        for key in sorted(ka, key=lambda k: (ka[k].server_id, k[0], k[1])):
            fa, fb = ka[key], kb[key]
            item = {"a": fa.fragment_id, "b": fb.fragment_id, "out": secrets.token_hex(16),
                    "role": key[0], "core_index": key[1]}
            if kind == "tt_add":
                k = key[1]
                item["position"] = "only" if n_cores == 1 else "first" if k == 0 else "last" if k == n_cores - 1 else "middle"
            if kind == "tucker_binary":
                item["tucker_kind"] = tucker_kind
            per_server.setdefault(fa.server_id, []).append(item)
        entries = []
        for sid in sorted(per_server):
            items = per_server[sid]
            reply = self._request(sid, {"op": "local_op", "kind": kind, "items": items})
            for item, out in zip(items, reply["outputs"]):
                entries.append(FragmentEntry(out["fragment_id"], sid, out["content_hash"],
                                             item["core_index"], item["role"], tuple(out["shape"])))
        entries.sort(key=lambda e: (e.role, e.core_index))
        return self._new_manifest(a, entries)

    def tt_round(self, manifest: ShareManifest, eps: float, randomize: bool = True,
                 delta: float = 0.05, seed: int | None = None) -> ShareManifest:
        """Rounding sweep as a message protocol between neighbouring servers."""
        if manifest.scheme != "tt":
            raise MisalignedShares("dispersed rounding needs TT shares")
        if not 0.0 < eps < 1.0:
            raise InvalidThreshold(f"error threshold must lie in (0, 1), got {eps}")
        cores = sorted(manifest.fragments, key=lambda f: f.core_index)
        n = len(cores)
        if n != self.n or any(f.server_id != k for k, f in enumerate(cores)):
            raise MisalignedShares("dispersed rounding needs core k on server k with one core per server")
        self._held(manifest)
        seed = resolve_seed(seed) if randomize else None
        session = secrets.token_hex(8)
        self.last_records = []
        if n == 1:
            return manifest
        for k in range(n - 1, 0, -1):
            self._request(k, {"op": "round_orth", "source": cores[k].fragment_id, "session": session})
            self._request(k - 1, {"op": "round_absorb", "source": cores[k - 1].fragment_id, "session": session})
        tol = eps / math.sqrt(n - 1)
        has_frame = False
        entries = []
        for k in range(n):
            body = {
                "op": "round_compress", "source": cores[k].fragment_id, "session": session,
                "step": k + 1, "last": k == n - 1, "rel_tol": tol, "randomize": bool(randomize),
                "delta": float(delta), "seed": seed, "expect_carry": k > 0,
                "expect_frame": has_frame, "out": secrets.token_hex(16),
            }
            reply = self._request(k, body)
            has_frame = bool(reply["has_frame"])
            if reply.get("record") is not None:
                self.last_records.append(reply["record"])
            entries.append(FragmentEntry(reply["fragment_id"], k, reply["content_hash"], k, "core",
                                         tuple(reply["shape"])))
        return self._new_manifest(manifest, entries)

    def drop(self, manifest: ShareManifest) -> None:
        by_server: dict[int, list[str]] = {}
        for f in manifest.fragments:
            by_server.setdefault(f.server_id, []).append(f.fragment_id)
        for sid, ids in sorted(by_server.items()):
            self._request(sid, {"op": "drop", "fragment_ids": ids})
            for fid in ids:
                self.placement.pop(fid, None)

    def shutdown(self) -> None:
        if self._closed:
            return
        for i, node in enumerate(self.nodes):
            if node.is_alive():
                try:
                    self._request(i, {"op": "shutdown"})
                except TNVaultError as exc:
                    log.debug("server %d did not acknowledge shutdown: %s", i, exc)
        self._closed = True
        for ep in self._endpoints:
            ep.close()
        for node in self.nodes:
            node.join(timeout=10)
            for t in node._readers:
                t.join(timeout=10)
        self.log.close()

    @property
    def closed(self) -> bool:
        return self._closed and all(ep.closed for ep in self._endpoints)


def spawn_cluster(n: int, transport: str = "in_memory", config: Mapping[str, str] | str | Path | None = None,
                  log_path=None, timeout: float = 120.0, inbox_timeout: float = 30.0) -> ClusterHandle:
    """Start ``n`` server threads plus links; ids are ``0..n-1``.

    ``config`` is a mapping or a ``key=value`` file (``host``, ``base_port``).
    """
    if n < 2:
        raise TooFewServers(f"a cluster needs at least 2 servers, got {n}")
    if isinstance(config, (str, Path)):
        config = read_config(config)
    return ClusterHandle(n, transport, config, log_path, timeout, inbox_timeout)
