"""Exact discrete simulation of two-choice bounded-size graph processes.

Each step draws two candidate edges independently and uniformly from all
C(n,2) distinct vertex pairs, applies a size-based selection rule, and adds
the chosen edge (multi-edges allowed, self-loops impossible). Components are
tracked with a union-find (union by size, path halving); per-component edge
multiplicities and the isolated-vertex count are maintained incrementally.

The default rule takes the first candidate exactly when it joins two isolated
vertices, and the second otherwise. `er_always_second` degenerates to the
uniform one-choice multigraph process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import _kernels as K
from .rng import as_uint64, derive_stream

FIRST_EDGE = "first_edge"
SECOND_EDGE = "second_edge"

_MODE_CODES = {"bohman_frieze": K.MODE_BF, "er_always_second": K.MODE_ER, "custom": K.MODE_CUSTOM}


@dataclass(frozen=True)
class RuleSpec:
    """Size-based edge-selection rule.

    Component sizes are capped at cutoff+1 before the table lookup, so the
    decision table must be total over {1..cutoff+1}^4. The tuple order is
    (first.u, first.v, second.u, second.v) component sizes.
    """

    mode: str = "bohman_frieze"
    cutoff: int = 1
    decision_table: Mapping[tuple[int, int, int, int], str] | None = None

    def __post_init__(self):
        if self.mode not in _MODE_CODES:
            raise ValueError(f"unknown rule mode {self.mode!r}")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        if self.mode == "custom":
            if self.decision_table is None:
                raise ValueError("custom rule needs a decision_table")
            cap = self.cutoff + 1
            want = cap**4
            keys = set(self.decision_table)
            if len(keys) != want:
                raise ValueError(f"decision_table must be total: {want} capped 4-tuples, got {len(keys)}")
            for key, choice in self.decision_table.items():
                if len(key) != 4 or any(not (1 <= s <= cap) for s in key):
                    raise ValueError(f"bad table key {key!r}")
                if choice not in (FIRST_EDGE, SECOND_EDGE):
                    raise ValueError(f"bad table value {choice!r}")

    @classmethod
    def bohman_frieze(cls) -> "RuleSpec":
        return cls(mode="bohman_frieze", cutoff=1)

    @classmethod
    def er_always_second(cls) -> "RuleSpec":
        return cls(mode="er_always_second", cutoff=0)

    @classmethod
    def from_table(cls, cutoff: int, table: Mapping[tuple[int, int, int, int], str]) -> "RuleSpec":
        return cls(mode="custom", cutoff=cutoff, decision_table=dict(table))

    def packed(self) -> tuple[int, int, np.ndarray]:
        """(mode_code, cap, flat table) for the compiled kernels."""
        cap = self.cutoff + 1
        if self.mode == "custom":
            flat = np.empty(cap**4, dtype=np.uint8)
            for (s1, s2, s3, s4), choice in self.decision_table.items():
                idx = ((s1 - 1) * cap + (s2 - 1)) * cap * cap + (s3 - 1) * cap + (s4 - 1)
                flat[idx] = 0 if choice == FIRST_EDGE else 1
        else:
            flat = np.zeros(1, dtype=np.uint8)
        return _MODE_CODES[self.mode], cap, flat

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "cutoff": self.cutoff}
        if self.decision_table is not None:
            d["decision_table"] = {",".join(map(str, k)): v for k, v in self.decision_table.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RuleSpec":
        table = d.get("decision_table")
        if table is not None:
            table = {tuple(int(x) for x in k.split(",")): v for k, v in table.items()}
        return cls(mode=d["mode"], cutoff=int(d.get("cutoff", 1)), decision_table=table)


def decide(rule: RuleSpec, sizes: tuple[int, int, int, int]) -> str:
    """Apply rule to already-capped component sizes; pure lookup, total."""
    s1, s2, s3, s4 = sizes
    if rule.mode == "bohman_frieze":
        return FIRST_EDGE if s1 == 1 and s2 == 1 else SECOND_EDGE
    if rule.mode == "er_always_second":
        return SECOND_EDGE
    cap = rule.cutoff + 1
    key = tuple(min(int(s), cap) for s in sizes)
    return rule.decision_table[key]


@dataclass(frozen=True)
class EdgeEvent:
    m: int
    first_candidate: tuple[int, int]
    second_candidate: tuple[int, int]
    chosen: tuple[int, int]
    was_first_isolated_pair: bool


@dataclass(frozen=True)
class ComponentCensus:
    """Histogram snapshot: tree/non-tree component counts by size.

    A component is a tree iff its edge count (with multiplicity) equals its
    size minus one. L holds the largest component sizes in decreasing order.
    """

    n: int
    m: int
    seed: int
    rule: RuleSpec
    tree_counts: dict[int, int]
    nontree_counts: dict[int, int]
    L: tuple[int, ...]
    isolated_count: int

    @property
    def L1(self) -> int:
        return self.L[0] if self.L else 0

    @property
    def L2(self) -> int:
        return self.L[1] if len(self.L) > 1 else 0

    def count_in(self, lo: int, hi: int, tree: bool | None = None) -> int:
        """Number of components with size in [lo, hi); tree=None counts all."""
        total = 0
        if tree is None or tree:
            total += sum(c for k, c in self.tree_counts.items() if lo <= k < hi)
        if tree is None or not tree:
            total += sum(c for k, c in self.nontree_counts.items() if lo <= k < hi)
        return total

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "seed": self.seed,
            "rule": self.rule.to_dict(),
            "tree_counts": {str(k): v for k, v in sorted(self.tree_counts.items())},
            "nontree_counts": {str(k): v for k, v in sorted(self.nontree_counts.items())},
            "L": list(self.L),
            "I": self.isolated_count,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


class ProcessState:
    """Mutable single-replica process state. Not thread-shareable; run
    independent replicas with independent seed streams instead."""

    def __init__(self, n: int, rule: RuleSpec | None = None, seed: int = 0):
        if n < 2:
            raise ValueError("need n >= 2 (no vertex pair exists otherwise)")
        self.n = int(n)
        self.rule = rule if rule is not None else RuleSpec.bohman_frieze()
        self.seed = int(seed)
        self.m = 0
        self.isolated_count = self.n
        self._parent = np.arange(self.n, dtype=np.int64)
        self._size = np.ones(self.n, dtype=np.int64)
        self._edges = np.zeros(self.n, dtype=np.int64)
        self._rng_state = as_uint64(seed)
        self._mode, self._cap, self._table = self.rule.packed()

    def step(self) -> EdgeEvent:
        """Draw two candidates, apply the rule, merge the chosen edge."""
        iso, st, u1, v1, u2, v2, took_first, first_iso = K.step_single(
            self._parent, self._size, self._edges, self.isolated_count,
            self._rng_state, self._mode, self._cap, self._table)
        self.isolated_count = int(iso)
        self._rng_state = as_uint64(int(st))
        self.m += 1
        first = (int(u1), int(v1))
        second = (int(u2), int(v2))
        return EdgeEvent(
            m=self.m,
            first_candidate=first,
            second_candidate=second,
            chosen=first if took_first else second,
            was_first_isolated_pair=bool(first_iso),
        )

    def run_until(self, m_target: int, trace: np.ndarray | None = None) -> None:
        """Advance to step m_target; optionally record I after every step
        into trace (length m_target - m)."""
        if m_target < self.m:
            raise ValueError(f"m_target {m_target} < current m {self.m}")
        nsteps = int(m_target) - self.m
        if nsteps == 0:
            return
        if trace is None:
            iso, st = K.step_batch(
                self._parent, self._size, self._edges, nsteps, self.isolated_count,
                self._rng_state, self._mode, self._cap, self._table)
        else:
            if trace.shape[0] != nsteps:
                raise ValueError("trace length must equal number of steps")
            iso, st = K.step_batch_trace(
                self._parent, self._size, self._edges, nsteps, self.isolated_count,
                self._rng_state, self._mode, self._cap, self._table, trace)
        self.isolated_count = int(iso)
        self._rng_state = as_uint64(int(st))
        self.m = int(m_target)

    def component_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(sizes, excess_edges) arrays over current components."""
        return K.census_roots(self._parent, self._size, self._edges)

    def census(self, largest: int = 8) -> ComponentCensus:
        sizes, excess = self.component_table()
        tree = sizes[excess == 0]
        nontree = sizes[excess > 0]
        tk, tc = np.unique(tree, return_counts=True)
        nk, nc = np.unique(nontree, return_counts=True)
        top = np.sort(sizes)[::-1][:largest]
        return ComponentCensus(
            n=self.n,
            m=self.m,
            seed=self.seed,
            rule=self.rule,
            tree_counts={int(k): int(c) for k, c in zip(tk, tc)},
            nontree_counts={int(k): int(c) for k, c in zip(nk, nc)},
            L=tuple(int(x) for x in top),
            isolated_count=self.isolated_count,
        )

    def sample_candidates(self, trials: int) -> np.ndarray:
        """Repeatedly run the candidate draw + rule WITHOUT merging; returns
        per-pair selection counts (unordered pair index, see pair_index).
        Exhaustive tracking, so refuse large n."""
        if self.n > 2048:
            raise ValueError("exhaustive pair tracking is only supported for n <= 2048")
        counts = np.zeros(self.n * (self.n - 1) // 2, dtype=np.int64)
        self._rng_state = as_uint64(int(K.candidate_trials(
            self._parent, self._size, trials, self._rng_state,
            self._mode, self._cap, self._table, counts)))
        return counts

    def pair_index(self, u: int, v: int) -> int:
        if u > v:
            u, v = v, u
        return u * self.n - (u * (u + 1)) // 2 + (v - u - 1)

    def is_isolated(self, v: int) -> bool:
        return int(self._size[self._root(v)]) == 1

    def _root(self, v: int) -> int:
        r = int(v)
        parent = self._parent
        while parent[r] != r:
            r = int(parent[r])
        return r

    def validate(self) -> None:
        """Internal consistency: conservation, isolated count, edge totals."""
        sizes, excess = self.component_table()
        if int(sizes.sum()) != self.n:
            raise AssertionError("component sizes do not sum to n")
        if int((sizes == 1).sum()) != self.isolated_count:
            raise AssertionError("isolated_count out of sync")
        edge_total = int((sizes - 1 + excess).sum())
        if edge_total != self.m:
            raise AssertionError("edge multiplicities do not sum to m")
        if int((excess < 0).sum()) != 0:
            raise AssertionError("component with fewer edges than a spanning tree")
        if int(((sizes == 1) & (excess != 0)).sum()) != 0:
            raise AssertionError("isolated vertex carrying edges")


def new_process(n: int, rule: RuleSpec | None = None, seed: int = 0) -> ProcessState:
    """Fresh empty process on n >= 2 vertices; identical (n, rule, seed)
    give bit-identical trajectories."""
    return ProcessState(n, rule, seed)


def replica_seed(master_seed: int, replica: int) -> int:
    """Deterministic per-replica seed stream."""
    return derive_stream(master_seed, replica)


def run_sweep(n: int, rule: RuleSpec, seed: int, m_grid: Iterable[int],
              largest: int = 2) -> list[ComponentCensus]:
    """One replica censused at each step count in increasing m_grid."""
    state = new_process(n, rule, seed)
    out = []
    for m in m_grid:
        state.run_until(int(m))
        out.append(state.census(largest=largest))
    return out
