"""Labeled trees and forests on [k], enumeration and isomorphism grouping.

Trees on k >= 3 vertices are generated by decoding all k^(k-2) Prufer
sequences; k=1 gives the single empty tree and k=2 the single edge.
Free-tree isomorphism uses the rooted-at-centroid canonical encoding, which
lets per-shape work (the density integrals) be done once per class.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

Edge = tuple[int, int]


def _normalize_edges(edges) -> tuple[Edge, ...]:
    return tuple((u, v) if u < v else (v, u) for u, v in edges)


def _check_acyclic(k: int, edges: tuple[Edge, ...]) -> bool:
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


@dataclass(frozen=True)
class LabeledForest:
    """Acyclic graph on vertices 0..k-1 (components may be smaller trees)."""

    k: int
    edges: tuple[Edge, ...]

    def __init__(self, k: int, edges):
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "edges", _normalize_edges(edges))
        if any(u == v or not (0 <= u < k and 0 <= v < k) for u, v in self.edges):
            raise ValueError("edges must join distinct vertices in range")
        if len(set(self.edges)) != len(self.edges):
            raise ValueError("duplicate edge")
        if not _check_acyclic(self.k, self.edges):
            raise ValueError("forest must be acyclic")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.k)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def components(self) -> list["LabeledForest"]:
        """Split into vertex-relabeled component forests (for product checks)."""
        adj = self.adjacency()
        seen = [False] * self.k
        out = []
        for s in range(self.k):
            if seen[s]:
                continue
            stack, comp = [s], [s]
            seen[s] = True
            while stack:
                u = stack.pop()
                for w in adj[u]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
                        comp.append(w)
            relabel = {v: i for i, v in enumerate(sorted(comp))}
            comp_edges = [(relabel[u], relabel[v]) for u, v in self.edges
                          if u in relabel and v in relabel]
            out.append(LabeledForest(len(comp), comp_edges))
        return out


class LabeledTree(LabeledForest):
    """Connected acyclic graph on [k]: exactly k-1 edges."""

    def __init__(self, k: int, edges):
        super().__init__(k, edges)
        if len(self.edges) != self.k - 1:
            raise ValueError(f"a tree on {k} vertices needs {k - 1} edges")


def prufer_decode(seq: tuple[int, ...], k: int) -> list[Edge]:
    """Standard decode of a Prufer sequence over 0..k-1 (length k-2)."""
    degree = [1] * k
    for x in seq:
        degree[x] += 1
    edges = []
    # smallest-leaf elimination via a pointer + implicit heap-free walk
    ptr = 0
    leaf = -1
    for x in seq:
        if leaf < 0:
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
        if degree[x] == 1 and x < ptr:
            leaf = x
        else:
            leaf = -1
    last = [v for v in range(k) if degree[v] == 1]
    edges.append((last[0], last[1]))
    return edges


def enumerate_labeled_trees(k: int, k_max: int = 8) -> Iterator[LabeledTree]:
    """All k^(k-2) labeled trees on [k], via Prufer sequences."""
    if not (1 <= k <= k_max):
        raise ValueError(f"k must be in [1, {k_max}]")
    if k == 1:
        yield LabeledTree(1, [])
        return
    if k == 2:
        yield LabeledTree(2, [(0, 1)])
        return
    for seq in itertools.product(range(k), repeat=k - 2):
        yield LabeledTree(k, prufer_decode(seq, k))


def canonical_code(tree: LabeledForest) -> str:
    """Canonical string of the free tree (rooted encoding at the centroid;
    for two centroids, the lexicographically smaller of the two rootings)."""
    k = tree.k
    if k == 1:
        return "()"
    adj = tree.adjacency()

    # centroid(s): remove leaves layer by layer
    degree = [len(a) for a in adj]
    leaves = [v for v in range(k) if degree[v] <= 1]
    removed = 0
    alive = [True] * k
    while k - removed > 2:
        nxt = []
        for v in leaves:
            alive[v] = False
            removed += 1
            for w in adj[v]:
                if alive[w]:
                    degree[w] -= 1
                    if degree[w] == 1:
                        nxt.append(w)
        leaves = nxt
    centroids = [v for v in range(k) if alive[v]]

    def encode(root: int) -> str:
        def rec(v: int, parent: int) -> str:
            subs = sorted(rec(w, v) for w in adj[v] if w != parent)
            return "(" + "".join(subs) + ")"
        return rec(root, -1)

    return min(encode(c) for c in centroids)


@dataclass(frozen=True)
class TreeClass:
    code: str
    representative: LabeledTree
    count: int  # number of labeled trees with this shape


@lru_cache(maxsize=None)
def isomorphism_classes(k: int, k_max: int = 8) -> tuple[TreeClass, ...]:
    """Shape classes of labeled trees on [k] with their multiplicities."""
    reps: dict[str, LabeledTree] = {}
    counts: dict[str, int] = {}
    for tree in enumerate_labeled_trees(k, k_max=k_max):
        code = canonical_code(tree)
        if code not in reps:
            reps[code] = tree
            counts[code] = 0
        counts[code] += 1
    return tuple(TreeClass(code=c, representative=reps[c], count=counts[c])
                 for c in sorted(reps))
