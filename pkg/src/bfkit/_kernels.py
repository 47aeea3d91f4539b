"""Compiled inner loops of the process engine.

Everything here is numba-jitted and GIL-free so independent replicas can run
on a thread pool. State lives in plain numpy arrays owned by the Python-side
ProcessState; only roots of the union-find carry valid size/edge counts.

RNG: splitmix64 advanced inline. Vertex draws use the top 53 bits mapped
through a float64 in [0,1); the selection bias is O(n * 2^-53), far below
anything resolvable by the statistical checks.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

# rule modes (must match process.RuleSpec)
MODE_BF = 0
MODE_ER = 1
MODE_CUSTOM = 2

_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(inline="always")
def _next(state):
    state = state + uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return state, z ^ (z >> uint64(31))


@njit(inline="always")
def _draw_vertex(state, n):
    state, z = _next(state)
    return state, np.int64((z >> uint64(11)) * _INV53 * n)


@njit(inline="always")
def _draw_pair(state, n):
    # uniform over unordered pairs of distinct vertices
    state, u = _draw_vertex(state, n)
    state, v = _draw_vertex(state, n - 1)
    if v >= u:
        v += 1
    return state, u, v


@njit(inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]  # path halving
        x = parent[x]
    return x


@njit(inline="always")
def _cap(s, cap):
    return s if s < cap else cap


@njit(inline="always")
def _choose_first(mode, cap, table, s1, s2, s3, s4):
    if mode == MODE_BF:
        return s1 == 1 and s2 == 1
    if mode == MODE_ER:
        return False
    i1 = _cap(s1, cap) - 1
    i2 = _cap(s2, cap) - 1
    i3 = _cap(s3, cap) - 1
    i4 = _cap(s4, cap) - 1
    idx = ((i1 * cap + i2) * cap + i3) * cap + i4
    return table[idx] == 0


@njit(inline="always")
def _merge(parent, size, edges, a, b, iso):
    """Add one edge between roots a and b; returns updated isolated count."""
    if a == b:
        edges[a] += 1
        return iso
    if size[a] < size[b]:
        a, b = b, a
    if size[a] == 1:
        iso -= 2
    elif size[b] == 1:
        iso -= 1
    parent[b] = a
    size[a] += size[b]
    edges[a] += edges[b] + 1
    return iso


@njit(nogil=True, cache=True)
def step_batch(parent, size, edges, nsteps, iso, state, mode, cap, table):
    """Advance the process by nsteps; returns (isolated_count, rng_state)."""
    n = parent.shape[0]
    for _ in range(nsteps):
        state, u1, v1 = _draw_pair(state, n)
        state, u2, v2 = _draw_pair(state, n)
        r1 = _find(parent, u1)
        r2 = _find(parent, v1)
        r3 = _find(parent, u2)
        r4 = _find(parent, v2)
        if _choose_first(mode, cap, table, size[r1], size[r2], size[r3], size[r4]):
            iso = _merge(parent, size, edges, r1, r2, iso)
        else:
            iso = _merge(parent, size, edges, r3, r4, iso)
    return iso, state


@njit(nogil=True, cache=True)
def step_batch_trace(parent, size, edges, nsteps, iso, state, mode, cap, table, trace):
    """Like step_batch, recording the isolated count after every step."""
    n = parent.shape[0]
    for s in range(nsteps):
        state, u1, v1 = _draw_pair(state, n)
        state, u2, v2 = _draw_pair(state, n)
        r1 = _find(parent, u1)
        r2 = _find(parent, v1)
        r3 = _find(parent, u2)
        r4 = _find(parent, v2)
        if _choose_first(mode, cap, table, size[r1], size[r2], size[r3], size[r4]):
            iso = _merge(parent, size, edges, r1, r2, iso)
        else:
            iso = _merge(parent, size, edges, r3, r4, iso)
        trace[s] = iso
    return iso, state


@njit(nogil=True, cache=True)
def step_single(parent, size, edges, iso, state, mode, cap, table):
    """One step; returns (iso, state, u1, v1, u2, v2, took_first, first_iso_pair)."""
    n = parent.shape[0]
    state, u1, v1 = _draw_pair(state, n)
    state, u2, v2 = _draw_pair(state, n)
    r1 = _find(parent, u1)
    r2 = _find(parent, v1)
    r3 = _find(parent, u2)
    r4 = _find(parent, v2)
    first_iso = size[r1] == 1 and size[r2] == 1
    took_first = _choose_first(mode, cap, table, size[r1], size[r2], size[r3], size[r4])
    if took_first:
        iso = _merge(parent, size, edges, r1, r2, iso)
    else:
        iso = _merge(parent, size, edges, r3, r4, iso)
    return iso, state, u1, v1, u2, v2, took_first, first_iso


@njit(nogil=True, cache=True)
def census_roots(parent, size, edges):
    """Component table: (sizes, excess_edges) over roots, in vertex order."""
    n = parent.shape[0]
    cnt = 0
    for v in range(n):
        if _find(parent, v) == v:
            cnt += 1
    out_size = np.empty(cnt, dtype=np.int64)
    out_excess = np.empty(cnt, dtype=np.int64)
    i = 0
    for v in range(n):
        if parent[v] == v:
            out_size[i] = size[v]
            out_excess[i] = edges[v] - (size[v] - 1)
            i += 1
    return out_size, out_excess


@njit(nogil=True, cache=True)
def candidate_trials(parent, size, trials, state, mode, cap, table, pair_counts):
    """Sample the per-step selection mechanism without mutating the state.

    pair_counts has one slot per unordered vertex pair, indexed by
    i*n - i*(i+1)/2 + (j-i-1) for i<j; the chosen pair's slot is incremented.
    Only usable for small n.
    """
    n = parent.shape[0]
    for _ in range(trials):
        state, u1, v1 = _draw_pair(state, n)
        state, u2, v2 = _draw_pair(state, n)
        r1 = _find(parent, u1)
        r2 = _find(parent, v1)
        r3 = _find(parent, u2)
        r4 = _find(parent, v2)
        if _choose_first(mode, cap, table, size[r1], size[r2], size[r3], size[r4]):
            a, b = u1, v1
        else:
            a, b = u2, v2
        if a > b:
            a, b = b, a
        idx = a * n - (a * (a + 1)) // 2 + (b - a - 1)
        pair_counts[idx] += 1
    return state
