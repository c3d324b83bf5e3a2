"""Tensor-network representations (TT, TR, Tucker, HT, TT-matrix).

All cores are float64 numpy arrays.  TT/TR core ``k`` has shape
``[R_{k-1}, I_k, R_k]``.  HT trees are nested 2-tuples whose leaves are
0-based mode indices, e.g. ``((0, 1), (2, 3))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from .errors import InvalidTree, ShapeMismatch
from .tensor import mode_product, permute_axes

__all__ = [
    "TTRepresentation",
    "TRRepresentation",
    "TuckerRepresentation",
    "HTRepresentation",
    "TTMatrixRepresentation",
    "Representation",
    "reconstruct",
    "num_params",
    "format_tag",
    "rep_blocks",
    "rep_from_blocks",
    "rep_structure",
    "tree_leaves",
    "internal_nodes",
    "normalize_tree",
    "balanced_tree",
]


def _cores(cores: Sequence[np.ndarray], order: int) -> list[np.ndarray]:
    out = [np.asarray(c, dtype=np.float64) for c in cores]
    if not out:
        raise ShapeMismatch("a representation needs at least one core")
    for k, c in enumerate(out):
        if c.ndim != order:
            raise ShapeMismatch(f"core {k} must have {order} modes, got shape {c.shape}")
    return out


def _chain_contract(cores: list[np.ndarray]) -> np.ndarray:
    """Contract a (possibly closed) chain of 3-way cores into a dense tensor."""
    shape = tuple(c.shape[1] for c in cores)
    if len(cores) == 1:
        return np.trace(cores[0], axis1=0, axis2=2).reshape(shape)
    cur = cores[0]
    for c in cores[1:-1]:
        cur = np.tensordot(cur, c, axes=(cur.ndim - 1, 0))
    # closing contraction over the last bond and the ring bond at once
    out = np.tensordot(cur, cores[-1], axes=([cur.ndim - 1, 0], [0, 2]))
    return out.reshape(shape)


@dataclass
class TTRepresentation:
    cores: list[np.ndarray]

    def __post_init__(self):
        self.cores = _cores(self.cores, 3)
        self.validate()

    def validate(self) -> None:
        cs = self.cores
        if cs[0].shape[0] != 1 or cs[-1].shape[2] != 1:
            raise ShapeMismatch(f"TT boundary ranks must be 1, got {self.ranks}")
        for k in range(1, len(cs)):
            if cs[k - 1].shape[2] != cs[k].shape[0]:
                raise ShapeMismatch(f"rank mismatch between cores {k - 1} and {k}")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (self.cores[0].shape[0],) + tuple(c.shape[2] for c in self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    def full(self) -> np.ndarray:
        return _chain_contract(self.cores)

    def num_params(self) -> int:
        return int(sum(c.size for c in self.cores))

    def copy(self) -> "TTRepresentation":
        return type(self)([c.copy() for c in self.cores])


class TRRepresentation(TTRepresentation):
    """Tensor ring: like TT but ``R_0 == R_N`` may exceed one."""

    def validate(self) -> None:
        cs = self.cores
        n = len(cs)
        for k in range(n):
            if cs[k].shape[2] != cs[(k + 1) % n].shape[0]:
                raise ShapeMismatch(f"ring rank mismatch between cores {k} and {(k + 1) % n}")


@dataclass
class TuckerRepresentation:
    core: np.ndarray
    factors: list[np.ndarray]

    def __post_init__(self):
        self.core = np.asarray(self.core, dtype=np.float64)
        self.factors = _cores(self.factors, 2)
        self.validate()

    def validate(self) -> None:
        if self.core.ndim != len(self.factors):
            raise ShapeMismatch(
                f"core of order {self.core.ndim} with {len(self.factors)} factors"
            )
        for k, u in enumerate(self.factors):
            if u.shape[1] != self.core.shape[k]:
                raise ShapeMismatch(f"factor {k} has {u.shape[1]} columns, core mode is {self.core.shape[k]}")

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.core.shape)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    def full(self) -> np.ndarray:
        t = self.core
        for k, u in enumerate(self.factors):
            t = mode_product(t, u, k)
        return t

    def num_params(self) -> int:
        return int(self.core.size + sum(u.size for u in self.factors))

    def copy(self) -> "TuckerRepresentation":
        return TuckerRepresentation(self.core.copy(), [u.copy() for u in self.factors])


Tree = Union[int, tuple]


def normalize_tree(tree: Any) -> Tree:
    """Convert lists to tuples and check the binary shape."""
    if isinstance(tree, (int, np.integer)):
        return int(tree)
    if isinstance(tree, (list, tuple)) and len(tree) == 2:
        return (normalize_tree(tree[0]), normalize_tree(tree[1]))
    raise InvalidTree(f"dimension tree nodes must be ints or pairs, got {tree!r}")


def tree_leaves(tree: Tree) -> list[int]:
    if isinstance(tree, int):
        return [tree]
    return tree_leaves(tree[0]) + tree_leaves(tree[1])


def internal_nodes(tree: Tree) -> list[tuple]:
    """Internal nodes in depth-first pre-order (root first)."""
    if isinstance(tree, int):
        return []
    return [tree] + internal_nodes(tree[0]) + internal_nodes(tree[1])


def check_tree(tree: Any, n_modes: int) -> Tree:
    tree = normalize_tree(tree)
    if isinstance(tree, int):
        raise InvalidTree("the dimension tree needs at least two leaves")
    leaves = tree_leaves(tree)
    if sorted(leaves) != list(range(n_modes)):
        raise InvalidTree(f"tree leaves {leaves} do not partition modes 0..{n_modes - 1}")
    return tree


def balanced_tree(modes: Sequence[int] | int) -> Tree:
    """Balanced, left-heavy binary tree over the modes in the given order."""
    if isinstance(modes, (int, np.integer)):
        modes = list(range(int(modes)))
    modes = list(modes)
    if len(modes) == 1:
        return int(modes[0])
    h = (len(modes) + 1) // 2
    return (balanced_tree(modes[:h]), balanced_tree(modes[h:]))


@dataclass
class HTRepresentation:
    """Hierarchical Tucker.

    ``transfer`` holds one core ``[R_left, R_right, R_node]`` per internal node
    in depth-first pre-order (see :func:`internal_nodes`); the root has
    ``R_node == 1``.  ``factors[k]`` is the ``[I_k, R_k]`` leaf matrix of mode k.
    """

    tree: Tree
    transfer: list[np.ndarray]
    factors: list[np.ndarray]

    def __post_init__(self):
        self.factors = _cores(self.factors, 2)
        self.tree = check_tree(self.tree, len(self.factors))
        self.transfer = _cores(self.transfer, 3)
        self.validate()

    def node_rank(self, node: Tree) -> int:
        if isinstance(node, int):
            return self.factors[node].shape[1]
        return self.transfer[self._index[node]].shape[2]

    def validate(self) -> None:
        nodes = internal_nodes(self.tree)
        if len(nodes) != len(self.transfer):
            raise ShapeMismatch(f"{len(nodes)} internal nodes but {len(self.transfer)} transfer cores")
        self._index = {t: i for i, t in enumerate(nodes)}
        for t, b in zip(nodes, self.transfer):
            want = (self.node_rank(t[0]), self.node_rank(t[1]))
            if b.shape[:2] != want:
                raise ShapeMismatch(f"transfer core {b.shape} does not match child ranks {want}")
        if self.transfer[0].shape[2] != 1:
            raise ShapeMismatch("HT root rank must be 1")

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def ranks(self) -> dict:
        """Rank per node (leaves keyed by mode, internal nodes by subtree)."""
        out: dict = {k: u.shape[1] for k, u in enumerate(self.factors)}
        for t, b in zip(internal_nodes(self.tree), self.transfer):
            out[t] = b.shape[2]
        return out

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    def node_basis(self, node: Tree) -> np.ndarray:
        """Frame matrix ``[prod of leaf sizes in node, R_node]`` (first leaf fastest)."""
        if isinstance(node, int):
            return self.factors[node]
        ul = self.node_basis(node[0])
        ur = self.node_basis(node[1])
        b = self.transfer[self._index[node]]
        x = np.einsum("ia,jb,abc->ijc", ul, ur, b, optimize=True)
        return x.reshape(ul.shape[0] * ur.shape[0], b.shape[2], order="F")

    def full(self) -> np.ndarray:
        leaves = tree_leaves(self.tree)
        v = self.node_basis(self.tree)[:, 0]
        t = v.reshape([self.factors[k].shape[0] for k in leaves], order="F")
        return permute_axes(t, np.argsort(leaves))

    def num_params(self) -> int:
        return int(sum(u.size for u in self.factors) + sum(b.size for b in self.transfer))

    def copy(self) -> "HTRepresentation":
        return HTRepresentation(
            self.tree, [b.copy() for b in self.transfer], [u.copy() for u in self.factors]
        )


@dataclass
class TTMatrixRepresentation:
    """Operator in TT format; core ``k`` is ``[R_{k-1}, I_k, J_k, R_k]``."""

    cores: list[np.ndarray]

    def __post_init__(self):
        self.cores = _cores(self.cores, 4)
        cs = self.cores
        if cs[0].shape[0] != 1 or cs[-1].shape[3] != 1:
            raise ShapeMismatch("TT-matrix boundary ranks must be 1")
        for k in range(1, len(cs)):
            if cs[k - 1].shape[3] != cs[k].shape[0]:
                raise ShapeMismatch(f"rank mismatch between operator cores {k - 1} and {k}")

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def row_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.cores)

    def full(self) -> np.ndarray:
        """Dense ``prod(I) x prod(J)`` matrix (first mode fastest on both sides)."""
        n = len(self.cores)
        cur = self.cores[0]  # [1, I1, J1, R1]
        for c in self.cores[1:]:
            cur = np.tensordot(cur, c, axes=(cur.ndim - 1, 0))
        # axes: 1, I1, J1, I2, J2, ..., IN, JN, 1
        t = cur.reshape(cur.shape[1:-1])
        perm = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
        t = np.transpose(t, perm)
        return t.reshape(int(np.prod(self.row_sizes)), int(np.prod(self.col_sizes)), order="F")

    def num_params(self) -> int:
        return int(sum(c.size for c in self.cores))


Representation = Union[TTRepresentation, TRRepresentation, TuckerRepresentation, HTRepresentation]


def reconstruct(rep) -> np.ndarray:
    """Dense tensor represented by ``rep``."""
    try:
        return rep.full()
    except AttributeError:
        raise ShapeMismatch(f"cannot reconstruct object of type {type(rep).__name__}") from None


def num_params(rep) -> int:
    """Stored scalar count (Table-1 style storage complexity)."""
    return rep.num_params()


def format_tag(rep) -> str:
    if isinstance(rep, TRRepresentation):
        return "tr"
    if isinstance(rep, TTRepresentation):
        return "tt"
    if isinstance(rep, TuckerRepresentation):
        return "tucker"
    if isinstance(rep, HTRepresentation):
        return "ht"
    raise TypeError(f"unknown representation type {type(rep).__name__}")


def rep_blocks(rep) -> list[tuple[str, int, np.ndarray]]:
    """Flatten a representation into ``(role, index, array)`` blocks.

    Roles are ``core`` (TT/TR cores, the Tucker core), ``factor`` (Tucker/HT
    leaf matrices) and ``transfer`` (HT internal cores, pre-order index).
    """
    tag = format_tag(rep)
    if tag in ("tt", "tr"):
        return [("core", k, c) for k, c in enumerate(rep.cores)]
    if tag == "tucker":
        return [("factor", k, u) for k, u in enumerate(rep.factors)] + [("core", 0, rep.core)]
    return [("factor", k, u) for k, u in enumerate(rep.factors)] + [
        ("transfer", k, b) for k, b in enumerate(rep.transfer)
    ]


def rep_structure(rep) -> dict:
    tag = format_tag(rep)
    out: dict[str, Any] = {"format": tag, "mode_sizes": list(rep.mode_sizes)}
    if tag in ("tt", "tr"):
        out["ranks"] = list(rep.ranks)
    elif tag == "tucker":
        out["ranks"] = list(rep.ranks)
    else:
        out["ranks"] = [int(u.shape[1]) for u in rep.factors]
        out["tree"] = rep.tree
        out["node_ranks"] = [int(b.shape[2]) for b in rep.transfer]
    return out


def rep_from_blocks(tag: str, blocks: dict[tuple[str, int], np.ndarray], tree=None):
    """Inverse of :func:`rep_blocks`; ``blocks`` maps ``(role, index)`` to arrays."""
    def collect(role):
        idx = sorted(k for r, k in blocks if r == role)
        if idx != list(range(len(idx))):
            raise ShapeMismatch(f"{role} blocks are not numbered 0..{len(idx) - 1}: {idx}")
        return [blocks[(role, k)] for k in idx]

    if tag == "tt":
        return TTRepresentation(collect("core"))
    if tag == "tr":
        return TRRepresentation(collect("core"))
    if tag == "tucker":
        return TuckerRepresentation(blocks[("core", 0)], collect("factor"))
    if tag == "ht":
        if tree is None:
            raise InvalidTree("HT blocks need the dimension tree")
        return HTRepresentation(normalize_tree(tree), collect("transfer"), collect("factor"))
    raise ValueError(f"unknown format tag {tag!r}")
