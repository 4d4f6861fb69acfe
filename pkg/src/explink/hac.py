"""Greedy agglomerative clustering, dendrograms and flat cuts.

Nodes are numbered ``0..n-1`` for leaves (local point positions) and
``n + t`` for the internal node created in round ``t``.  Ties between equal
linkage values go to the lexicographically smallest pair of node ids.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import DissimilarityModel, Unit
from .errors import DomainError
from .linkage import Linkage, LinkageStats, _merge

__all__ = [
    "Dendrogram",
    "FlatClustering",
    "HacState",
    "hac_round",
    "cluster_matrix",
    "cluster_unit",
    "build_dendrogram",
    "build_dendrograms",
    "cut_tree",
    "cut_to_k",
]


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Binary merge tree over ``n`` leaves.

    ``left[t]``, ``right[t]`` and ``height[t]`` describe internal node
    ``n + t``.  ``points`` maps leaf ``i`` to a dataset position.
    """

    left: np.ndarray
    right: np.ndarray
    height: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        n = self.n_leaves
        if len(self.left) != max(n - 1, 0) or len(self.right) != len(self.left):
            raise DomainError(f"a tree over {n} leaves needs {max(n - 1, 0)} internal nodes")

    @property
    def n_leaves(self) -> int:
        return int(len(self.points))

    @property
    def root(self) -> int:
        return 2 * self.n_leaves - 2 if self.n_leaves > 1 else 0

    def is_leaf(self, node: int) -> bool:
        return node < self.n_leaves

    def children(self, node: int) -> tuple[int, int]:
        t = node - self.n_leaves
        return int(self.left[t]), int(self.right[t])

    def node_height(self, node: int) -> float:
        return 0.0 if self.is_leaf(node) else float(self.height[node - self.n_leaves])

    @cached_property
    def parent(self) -> np.ndarray:
        n = self.n_leaves
        parent = np.full(max(2 * n - 1, 1), -1, dtype=np.int64)
        for t in range(n - 1):
            parent[self.left[t]] = n + t
            parent[self.right[t]] = n + t
        return parent

    def leaves(self, node: int) -> list[int]:
        """Local leaf positions under ``node``, left to right."""
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if self.is_leaf(v):
                out.append(v)
            else:
                l, r = self.children(v)
                stack.append(r)
                stack.append(l)
        return out

    def equals(self, other: "Dendrogram", atol: float = 0.0) -> bool:
        return (
            np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.points, other.points)
            and np.allclose(self.height, other.height, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class FlatClustering:
    """Cluster id per local leaf position; ids are contiguous from 0."""

    assignment: np.ndarray
    points: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    def clusters(self) -> list[list[int]]:
        return [np.flatnonzero(self.assignment == k).tolist() for k in range(self.n_clusters)]


def _empty_like(stats: LinkageStats, index) -> None:
    stats.count[index] = 0
    stats.sum_f[index] = 0.0
    stats.min_f[index] = np.inf
    stats.max_f[index] = -np.inf
    stats.shift[index] = -np.inf
    stats.w_sum[index] = 0.0
    stats.wf_sum[index] = 0.0
    stats.wff_sum[index] = 0.0
    stats.argmin[index] = -1
    stats.argmax[index] = -1


class HacState:
    """Active clusters of a running agglomeration plus pairwise linkage stats.

    Cluster ``slot`` s holds node ``node[s]``; merged clusters reuse the slot
    of their first argument.  ``values[s, t]`` is the current linkage between
    active slots (``inf`` elsewhere).
    """

    def __init__(self, dissim: np.ndarray, linkage: Linkage):
        d = np.asarray(dissim, dtype=np.float64)
        n = d.shape[0]
        if d.shape != (n, n):
            raise DomainError(f"dissimilarity matrix must be square, got {d.shape}")
        self.dissim = d
        self.linkage = linkage
        self.n = n
        lo = np.minimum.outer(np.arange(n), np.arange(n))
        hi = np.maximum.outer(np.arange(n), np.arange(n))
        self.pair_key = lo * n + hi
        self.stats = LinkageStats.singletons(d, linkage.stats_alpha, self.pair_key)
        diag = np.diag_indices(n)
        _empty_like(self.stats, diag)
        self.values = np.asarray(linkage.value(self.stats), dtype=np.float64).copy()
        self.values[diag] = np.inf
        self.node = np.arange(n)
        self.active = np.ones(n, dtype=bool)
        self.assign = np.arange(n)
        self.left: list[int] = []
        self.right: list[int] = []
        self.height: list[float] = []

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def active_slots(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def members(self, slot: int) -> np.ndarray:
        return np.flatnonzero(self.assign == slot)

    def best_pair(self, allowed: np.ndarray | None = None) -> tuple[int, int]:
        """Slots of the minimal-linkage pair, optionally restricted by a boolean mask."""
        v = self.values if allowed is None else np.where(allowed, self.values, np.inf)
        best = v.min() if v.size else np.inf
        if not best < np.inf:
            raise DomainError("no mergeable cluster pair")
        rows, cols = np.nonzero(v == best)
        ids_a, ids_b = self.node[rows], self.node[cols]
        lo, hi = np.minimum(ids_a, ids_b), np.maximum(ids_a, ids_b)
        k = np.lexsort((hi, lo))[0]
        a, b = int(rows[k]), int(cols[k])
        return (a, b) if self.node[a] < self.node[b] else (b, a)

    def merge(self, a: int, b: int) -> int:
        """Merge slots ``a`` and ``b``; returns the new node id."""
        if a == b or not (self.active[a] and self.active[b]):
            raise DomainError(f"slots {a} and {b} are not two distinct active clusters")
        height = float(self.values[a, b])
        st = self.stats
        merged = _merge(st.take((a, slice(None))), st.take((b, slice(None))))
        _empty_like(merged, [a, b])
        st.put((a, slice(None)), merged)
        st.put((slice(None), a), merged)
        _empty_like(st, (b, slice(None)))
        _empty_like(st, (slice(None), b))
        row = np.asarray(self.linkage.value(st.take((a, slice(None)))), dtype=np.float64)
        row[st.count[a] == 0] = np.inf
        self.values[a, :] = row
        self.values[:, a] = row
        self.values[b, :] = np.inf
        self.values[:, b] = np.inf

        new_id = self.n + len(self.left)
        self.left.append(int(self.node[a]))
        self.right.append(int(self.node[b]))
        self.height.append(height)
        self.node[a] = new_id
        self.active[b] = False
        self.assign[self.assign == b] = a
        return new_id

    def dendrogram(self, points: np.ndarray | None = None) -> Dendrogram:
        if self.n_active > 1:
            raise DomainError(f"agglomeration unfinished: {self.n_active} clusters remain")
        pts = np.arange(self.n) if points is None else np.asarray(points)
        return Dendrogram(
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.height, dtype=np.float64),
            pts,
        )


def hac_round(state: HacState, linkage: Linkage | None = None) -> tuple[int, int]:
    """Perform one greedy merge; returns the merged node ids."""
    if linkage is not None and linkage != state.linkage:
        raise DomainError("state was built for a different linkage")
    if state.n_active < 2:
        raise DomainError("a round needs at least two active clusters")
    a, b = state.best_pair()
    pair = (int(state.node[a]), int(state.node[b]))
    state.merge(a, b)
    return pair


def cluster_matrix(dissim: np.ndarray, linkage: Linkage, points=None) -> Dendrogram:
    """Run HAC to completion on a dissimilarity matrix."""
    state = HacState(dissim, linkage)
    while state.n_active > 1:
        state.merge(*state.best_pair())
    return state.dendrogram(points)


def cluster_unit(unit: Unit, model: DissimilarityModel, linkage: Linkage) -> Dendrogram:
    return cluster_matrix(model.matrix(unit), linkage, unit.index)


def build_dendrograms(dataset, model: DissimilarityModel, linkage: Linkage) -> list[Dendrogram]:
    """One dendrogram per comparable unit (the whole point set, or each block)."""
    return [cluster_unit(u, model, linkage) for u in dataset.units()]


def build_dendrogram(dataset, model: DissimilarityModel, linkage: Linkage) -> Dendrogram:
    """Dendrogram of a single-unit dataset (use :func:`build_dendrograms` for blocks)."""
    units = dataset.units()
    if len(units) != 1:
        raise DomainError(f"dataset has {len(units)} blocks; use build_dendrograms")
    return cluster_unit(units[0], model, linkage)


def cut_tree(tree: Dendrogram, threshold: float) -> FlatClustering:
    """Tree-consistent flat clustering at ``threshold``.

    Descends from the root, splitting every internal node whose height exceeds
    the threshold and emitting the leaf set of the first node that does not.
    With monotone heights every emitted cluster has all merges at or below the
    threshold; under inversions a node is kept whole once its own height
    passes, whatever lies beneath it.
    """
    n = tree.n_leaves
    assignment = np.full(n, -1, dtype=np.int64)
    stack = [tree.root] if n else []
    k = 0
    while stack:
        v = stack.pop()
        if not tree.is_leaf(v) and tree.node_height(v) > threshold:
            l, r = tree.children(v)
            stack.append(r)
            stack.append(l)
        else:
            assignment[tree.leaves(v)] = k
            k += 1
    return FlatClustering(assignment, tree.points)


def cut_to_k(tree: Dendrogram, k: int) -> FlatClustering:
    """The ``k`` clusters active before the final ``k - 1`` merges."""
    n = tree.n_leaves
    if not 1 <= k <= max(n, 1):
        raise DomainError(f"cannot cut {n} leaves into {k} clusters")
    first_undone = n + (n - k)  # internal nodes with id >= this are undone
    roots = []
    stack = [tree.root] if n else []
    while stack:
        v = stack.pop()
        if v >= first_undone:
            l, r = tree.children(v)
            stack.append(r)
            stack.append(l)
        else:
            roots.append(v)
    assignment = np.full(n, -1, dtype=np.int64)
    for c, v in enumerate(roots):
        assignment[tree.leaves(v)] = c
    return FlatClustering(assignment, tree.points)
