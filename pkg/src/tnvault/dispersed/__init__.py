"""Dispersed computation on shares held by simulated servers."""
from __future__ import annotations

from ..sharing import ShareManifest, ShareSet
from .cluster import ClusterHandle, ProtocolLog, ServerNode, spawn_cluster
from .transport import TRANSPORTS
from .wire import MsgType, WireMessage

__all__ = [
    "ClusterHandle",
    "ProtocolLog",
    "ServerNode",
    "spawn_cluster",
    "distribute",
    "dispersed_local_op",
    "dispersed_tt_round",
    "fetch",
    "TRANSPORTS",
    "MsgType",
    "WireMessage",
]


def distribute(cluster: ClusterHandle, shares: ShareSet, manifest: ShareManifest) -> dict[int, list[str]]:
    return cluster.distribute(shares, manifest)


def dispersed_local_op(cluster: ClusterHandle, kind: str, a: ShareManifest, b: ShareManifest,
                       tucker_kind: str | None = None) -> ShareManifest:
    return cluster.local_op(kind, a, b, tucker_kind)


def dispersed_tt_round(cluster: ClusterHandle, manifest: ShareManifest, eps: float,
                       randomize: bool = True, delta: float = 0.05, seed: int | None = None) -> ShareManifest:
    return cluster.tt_round(manifest, eps, randomize, delta, seed)


def fetch(cluster: ClusterHandle, manifest: ShareManifest) -> ShareSet:
    return cluster.fetch(manifest)
