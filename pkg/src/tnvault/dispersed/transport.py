"""Ordered, reliable byte streams between simulated parties.

Two transports share one interface (:class:`Endpoint`): an in-process pipe
guarded by a condition variable, and loopback TCP sockets.
"""
from __future__ import annotations

import socket
import threading
from pathlib import Path
from typing import Callable, Mapping

from ..errors import NodeFailure, TransportUnavailable

TRANSPORTS = ("in_memory", "local_sockets")


class LinkClosed(ConnectionError):
    pass


class BytePipe:
    """One-directional in-memory byte stream."""

    def __init__(self):
        self._buf = bytearray()
        self._cond = threading.Condition()
        self._closed = False

    def write(self, data: bytes) -> None:
        with self._cond:
            if self._closed:
                raise LinkClosed("pipe closed")
            self._buf += data
            self._cond.notify_all()

    def read_exact(self, n: int, timeout: float | None) -> bytes:
        with self._cond:
            ok = self._cond.wait_for(lambda: len(self._buf) >= n or self._closed, timeout)
            if len(self._buf) >= n:
                out = bytes(self._buf[:n])
                del self._buf[:n]
                return out
            if not ok:
                raise TimeoutError(f"no data within {timeout} s")
            raise LinkClosed("pipe closed")

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class Endpoint:
    """One side of a bidirectional link."""

    timeout: float | None = 120.0

    def send(self, data: bytes) -> None:  # pragma: no cover - interface
        raise NotImplementedError

    def recv_exact(self, n: int) -> bytes:  # pragma: no cover - interface
        raise NotImplementedError

    def close(self) -> None:  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def closed(self) -> bool:  # pragma: no cover - interface
        raise NotImplementedError


class MemoryEndpoint(Endpoint):
    def __init__(self, out_pipe: BytePipe, in_pipe: BytePipe):
        self._out = out_pipe
        self._in = in_pipe
        self._closed = False

    def send(self, data: bytes) -> None:
        self._out.write(data)

    def recv_exact(self, n: int) -> bytes:
        try:
            return self._in.read_exact(n, self.timeout)
        except TimeoutError as exc:
            raise NodeFailure(str(exc)) from exc

    def close(self) -> None:
        self._closed = True
        self._out.close()
        self._in.close()

    @property
    def closed(self) -> bool:
        return self._closed


class SocketEndpoint(Endpoint):
    def __init__(self, sock: socket.socket):
        self._sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()

    def send(self, data: bytes) -> None:
        with self._send_lock:
            try:
                self._sock.sendall(data)
            except OSError as exc:
                raise LinkClosed(str(exc)) from exc

    def recv_exact(self, n: int) -> bytes:
        self._sock.settimeout(self.timeout)
        chunks = []
        left = n
        while left:
            try:
                chunk = self._sock.recv(min(left, 1 << 20))
            except socket.timeout as exc:
                raise NodeFailure(f"no data within {self.timeout} s") from exc
            except OSError as exc:
                raise LinkClosed(str(exc)) from exc
            if not chunk:
                raise LinkClosed("peer closed the connection")
            chunks.append(chunk)
            left -= len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    @property
    def closed(self) -> bool:
        return self._sock.fileno() == -1


def memory_link() -> tuple[MemoryEndpoint, MemoryEndpoint]:
    a_to_b, b_to_a = BytePipe(), BytePipe()
    return MemoryEndpoint(a_to_b, b_to_a), MemoryEndpoint(b_to_a, a_to_b)


def socket_link(host: str = "127.0.0.1", port: int = 0) -> tuple[SocketEndpoint, SocketEndpoint]:
    try:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((host, port))
            listener.listen(1)
            listener.settimeout(10.0)
            client = socket.create_connection(listener.getsockname(), timeout=10.0)
            server, _ = listener.accept()
        finally:
            listener.close()
    except OSError as exc:
        raise TransportUnavailable(f"cannot open loopback link on {host}:{port}: {exc}") from exc
    client.settimeout(None)
    server.settimeout(None)
    return SocketEndpoint(client), SocketEndpoint(server)


def read_config(path: str | Path | None) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    if path is None:
        return {}
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip().strip('"').strip("'")
    return out


class LinkFactory:
    """Creates links for a cluster according to the transport settings.

    ``local_sockets`` reads ``host`` (default 127.0.0.1) and ``base_port``
    (default 0, i.e. ephemeral ports); with a nonzero base port the links
    take consecutive ports.
    """

    def __init__(self, transport: str, config: Mapping[str, str] | None = None):
        if transport not in TRANSPORTS:
            raise TransportUnavailable(f"unknown transport {transport!r}; expected one of {TRANSPORTS}")
        self.transport = transport
        config = dict(config or {})
        self.host = config.get("host", "127.0.0.1")
        self.base_port = int(config.get("base_port", 0))
        self._count = 0

    def __call__(self) -> tuple[Endpoint, Endpoint]:
        if self.transport == "in_memory":
            return memory_link()
        port = self.base_port + self._count if self.base_port else 0
        self._count += 1
        return socket_link(self.host, port)


SendHook = Callable[[object, object, int, bytes], bytes]
